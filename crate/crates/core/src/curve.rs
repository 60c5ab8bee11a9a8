//! Generating curves in the meridian half-plane `{(x, r) : r >= 0}`.
//!
//! Nodes are stored in arc-length order rather than as a graph over the
//! axis, so overhanging profiles are representable. The graph chart `r = ρ(x)`
//! is a derived view. Endpoint tangency is encoded by ghost nodes obtained
//! by reflection: across the supporting plane at a free-boundary end, and
//! through the axis at a pole.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use crate::math::{self, PI};

/// Smallest node count accepted for a profile curve.
pub const MIN_NODES: usize = 16;

/// Relative spacing deviation tolerated by the uniform-spacing check.
pub const SPACING_TOLERANCE: f64 = 0.01;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("invalid shape spec: `{field}` {reason}")]
    InvalidSpec {
        field: &'static str,
        reason: &'static str,
    },
    #[error("degenerate curve: total length {length:e} is below 1e-12 of the bounding box diagonal")]
    Degenerate { length: f64 },
    #[error("invalid curve: {0}")]
    Invalid(String),
}

/// A point (or vector) in the meridian half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    /// Axial coordinate `x_1`.
    pub x: f64,
    /// Distance from the rotation axis.
    pub r: f64,
}

impl Point {
    pub const fn new(x: f64, r: f64) -> Self {
        Self { x, r }
    }

    #[inline]
    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.r * other.r
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::sqrt(self.x * self.x + self.r * self.r)
    }

    /// Counter-clockwise quarter turn; maps a tangent to the outward normal.
    #[inline]
    pub fn perp(self) -> Point {
        Point::new(-self.r, self.x)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.r + o.r)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.r - o.r)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.r * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.r)
    }
}

/// How the generating curve meets its surroundings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Topology {
    /// From the plane `x = 0` (meeting it at a right angle) to a single pole.
    FreeBoundary,
    /// From a left pole to a right pole; the surface is compact without boundary.
    Closed,
    /// Between the plane `x = 0` and a parallel plane at the last node's `x`,
    /// meeting both at right angles. No pole; used for cylinder reference surfaces.
    Bridge,
}

/// Boundary behaviour at one end of the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndKind {
    /// On a plane perpendicular to the axis (Neumann contact).
    Plane,
    /// On the axis of rotation.
    Pole,
}

impl Topology {
    pub fn left_end(self) -> EndKind {
        match self {
            Topology::Closed => EndKind::Pole,
            Topology::FreeBoundary | Topology::Bridge => EndKind::Plane,
        }
    }

    pub fn right_end(self) -> EndKind {
        match self {
            Topology::Bridge => EndKind::Plane,
            Topology::FreeBoundary | Topology::Closed => EndKind::Pole,
        }
    }
}

/// Ordered node list of a generating curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    nodes: Vec<Point>,
    topology: Topology,
    dim: usize,
}

impl ProfileCurve {
    /// Wraps nodes without checking any invariant. Use [`validate`] or
    /// [`ProfileCurve::new`] when the input is untrusted.
    pub fn from_nodes(nodes: Vec<Point>, topology: Topology, dim: usize) -> Self {
        Self {
            nodes,
            topology,
            dim,
        }
    }

    /// Builds a curve and rejects it unless every required invariant holds.
    pub fn new(nodes: Vec<Point>, topology: Topology, dim: usize) -> Result<Self, CurveError> {
        let curve = Self::from_nodes(nodes, topology, dim);
        let report = validate(&curve);
        match report.first_failure() {
            None => Ok(curve),
            Some(check) => Err(CurveError::Invalid(format!(
                "{}: {}",
                check.name, check.detail
            ))),
        }
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Dimension `n` of the hypersurface swept out in `R^{n+1}`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn into_nodes(self) -> Vec<Point> {
        self.nodes
    }

    pub fn is_pole(&self, i: usize) -> bool {
        let last = self.nodes.len() - 1;
        (i == 0 && self.topology.left_end() == EndKind::Pole)
            || (i == last && self.topology.right_end() == EndKind::Pole)
    }

    /// Lengths of the `N - 1` polyline segments.
    pub fn segment_lengths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }

    /// Polyline length of the generating curve.
    pub fn length(&self) -> f64 {
        self.nodes.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.nodes)
    }

    /// Previous neighbour of node `i`, reflected at the left end.
    pub fn prev(&self, i: usize) -> Point {
        if i > 0 {
            return self.nodes[i - 1];
        }
        let (p0, p1) = (self.nodes[0], self.nodes[1]);
        match self.topology.left_end() {
            EndKind::Plane => Point::new(2.0 * p0.x - p1.x, p1.r),
            EndKind::Pole => Point::new(p1.x, -p1.r),
        }
    }

    /// Next neighbour of node `i`, reflected at the right end.
    pub fn next(&self, i: usize) -> Point {
        let last = self.nodes.len() - 1;
        if i < last {
            return self.nodes[i + 1];
        }
        let (pl, pm) = (self.nodes[last], self.nodes[last - 1]);
        match self.topology.right_end() {
            EndKind::Plane => Point::new(2.0 * pl.x - pm.x, pm.r),
            EndKind::Pole => Point::new(pm.x, -pm.r),
        }
    }

    /// Axial coordinate of the right pole, `d(t)`, or of the right plane.
    pub fn right_x(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].x
    }

    /// Axial coordinate of the left end, `e(t)` for a closed curve.
    pub fn left_x(&self) -> f64 {
        self.nodes[0].x
    }

    /// Equal arc-length resampling of the polyline to `n` nodes.
    pub fn resample(&self, n: usize) -> Result<ProfileCurve, CurveError> {
        if n < MIN_NODES {
            return Err(CurveError::InvalidSpec {
                field: "nodes",
                reason: "must be at least 16",
            });
        }
        let nodes = resample_polyline(&self.nodes, n)?;
        let mut out = ProfileCurve::from_nodes(nodes, self.topology, self.dim);
        out.impose_endpoint_constraints();
        Ok(out)
    }

    /// Snaps endpoint coordinates onto their constraint sets.
    pub fn impose_endpoint_constraints(&mut self) {
        let last = self.nodes.len() - 1;
        match self.topology.left_end() {
            EndKind::Plane => self.nodes[0].x = 0.0,
            EndKind::Pole => self.nodes[0].r = 0.0,
        }
        if self.topology.right_end() == EndKind::Pole {
            self.nodes[last].r = 0.0;
        }
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [Point] {
        &mut self.nodes
    }
}

fn bbox_diagonal(nodes: &[Point]) -> f64 {
    let (mut x0, mut x1, mut r0, mut r1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in nodes {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        r0 = r0.min(p.r);
        r1 = r1.max(p.r);
    }
    if nodes.is_empty() {
        return 0.0;
    }
    math::hypot(x1 - x0, r1 - r0)
}

/// Equal arc-length resampling of an arbitrary polyline by piecewise-linear
/// interpolation. Endpoints are copied exactly.
pub fn resample_polyline(points: &[Point], n: usize) -> Result<Vec<Point>, CurveError> {
    if n < 2 || points.len() < 2 {
        return Err(CurveError::InvalidSpec {
            field: "nodes",
            reason: "resampling needs at least two input and two output nodes",
        });
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    if !(total > 1e-12 * bbox_diagonal(points)) || total == 0.0 {
        return Err(CurveError::Degenerate { length: total });
    }
    let mut out = Vec::with_capacity(n);
    out.push(points[0]);
    let mut seg = 0;
    for i in 1..n - 1 {
        let s = total * i as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let lambda = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * lambda);
    }
    out.push(points[points.len() - 1]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Violations make the curve unusable.
    Required,
    /// Reported only; does not invalidate the curve.
    Advisory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub severity: Severity,
    /// First offending node (or segment) index.
    pub location: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.first_failure().is_none()
    }

    pub fn first_failure(&self) -> Option<&ValidationCheck> {
        self.checks
            .iter()
            .find(|c| !c.passed && c.severity == Severity::Required)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, severity: Severity, violation: Option<(usize, String)>) {
        let (passed, location, detail) = match violation {
            None => (true, None, String::from("ok")),
            Some((i, d)) => (false, Some(i), d),
        };
        self.checks.push(ValidationCheck {
            name,
            passed,
            severity,
            location,
            detail,
        });
    }
}

/// Checks every curve and topology invariant; never mutates.
pub fn validate(curve: &ProfileCurve) -> ValidationReport {
    let mut report = ValidationReport::default();
    let nodes = curve.nodes();
    let n_nodes = nodes.len();

    report.push(
        "node_count",
        Severity::Required,
        (n_nodes < MIN_NODES).then(|| (n_nodes, format!("{n_nodes} nodes, need at least {MIN_NODES}"))),
    );
    report.push(
        "dimension",
        Severity::Required,
        (curve.dim() < 2).then(|| (0, format!("n = {} must be at least 2", curve.dim()))),
    );
    let non_finite = nodes
        .iter()
        .position(|p| !p.x.is_finite() || !p.r.is_finite());
    report.push(
        "finite",
        Severity::Required,
        non_finite.map(|i| (i, format!("non-finite coordinate at node {i}"))),
    );
    if n_nodes < 2 || non_finite.is_some() {
        return report;
    }

    let tol = 1e-12 * bbox_diagonal(nodes).max(f64::MIN_POSITIVE);
    let last = n_nodes - 1;
    let (first, final_) = (nodes[0], nodes[last]);

    let left = match curve.topology().left_end() {
        EndKind::Plane if first.x.abs() > tol => {
            Some((0, format!("plane contact: first node has x = {} (expected 0)", first.x)))
        }
        EndKind::Plane if first.r <= 0.0 => {
            Some((0, format!("plane contact: first node has r = {} (expected > 0)", first.r)))
        }
        EndKind::Pole if first.r.abs() > tol => {
            Some((0, format!("pole contact: first node has r = {} (expected 0)", first.r)))
        }
        _ => None,
    };
    report.push("left_end", Severity::Required, left);

    let right = match curve.topology().right_end() {
        EndKind::Pole if final_.r.abs() > tol => Some((
            last,
            format!("pole contact: last node has r = {} (expected 0)", final_.r),
        )),
        EndKind::Plane if final_.r <= 0.0 => Some((
            last,
            format!("plane contact: last node has r = {} (expected > 0)", final_.r),
        )),
        _ => None,
    };
    report.push("right_end", Severity::Required, right);

    report.push(
        "axis_order",
        Severity::Required,
        (final_.x <= first.x).then(|| {
            (
                last,
                format!("last node x = {} must exceed first node x = {}", final_.x, first.x),
            )
        }),
    );

    let pinch = (1..last).find(|&i| nodes[i].r <= 0.0);
    report.push(
        "interior_radius",
        Severity::Required,
        pinch.map(|i| (i, format!("pinch at node {i}: r = {}", nodes[i].r))),
    );

    let dup = nodes.windows(2).position(|w| (w[1] - w[0]).norm() <= tol);
    report.push(
        "distinct_nodes",
        Severity::Required,
        dup.map(|i| (i, format!("nodes {i} and {} coincide", i + 1))),
    );

    report.push(
        "simple",
        Severity::Required,
        first_self_intersection(nodes).map(|(i, j)| (i, format!("segments {i} and {j} intersect"))),
    );

    let lengths = curve.segment_lengths();
    let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let worst = lengths
        .iter()
        .enumerate()
        .map(|(i, h)| (i, (h - mean).abs() / mean))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    report.push(
        "uniform_spacing",
        Severity::Advisory,
        (worst.1 > SPACING_TOLERANCE).then(|| {
            (
                worst.0,
                format!("segment {} deviates {:.3}% from mean spacing", worst.0, 100.0 * worst.1),
            )
        }),
    );
    report
}

fn first_self_intersection(nodes: &[Point]) -> Option<(usize, usize)> {
    let segs = nodes.len() - 1;
    for i in 0..segs {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let (ax0, ax1) = (a.x.min(b.x), a.x.max(b.x));
        let (ar0, ar1) = (a.r.min(b.r), a.r.max(b.r));
        for j in i + 2..segs {
            let (c, d) = (nodes[j], nodes[j + 1]);
            if c.x.max(d.x) < ax0 || c.x.min(d.x) > ax1 || c.r.max(d.r) < ar0 || c.r.min(d.r) > ar1 {
                continue;
            }
            if segments_cross(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.r - o.r) - (a.r - o.r) * (b.x - o.x)
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Scenario library for initial surfaces.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ShapeKind {
    /// Quarter circle from `(0, radius)` to `(radius, 0)`.
    Hemisphere { radius: f64 },
    /// Half circle from `(center_x - radius, 0)` to `(center_x + radius, 0)`.
    Sphere { radius: f64, center_x: f64 },
    /// Polar graph `ρ(φ) = radius + amplitude · P_{2m}(cos φ)` about the origin,
    /// `φ` the angle from the axis and `m = mode_count`. Even Legendre modes
    /// keep the right angle at the plane.
    PerturbedHemisphere {
        radius: f64,
        amplitude: f64,
        mode_count: u32,
    },
    /// Closed analogue of [`ShapeKind::PerturbedHemisphere`] about `(center_x, 0)`.
    PerturbedSphere {
        radius: f64,
        center_x: f64,
        amplitude: f64,
        mode_count: u32,
    },
    /// Graph `r = base_radius + amplitude · cos(mode_count · π · ξ / length)` over a
    /// cylinder of the given length, closed by circular caps of the end radius
    /// (one cap at the far end for a free boundary, one at each end when closed).
    CosineBumpCylinder {
        base_radius: f64,
        length: f64,
        amplitude: f64,
        mode_count: u32,
    },
    /// Closed profile `x = L(1 - cos θ)/2`, `r = sin θ · (ν + (β - ν) cos²θ)`,
    /// `θ ∈ [0, π]`, with `ν = neck_radius` at the middle and
    /// `β = 3√3/2 · bulb_radius`, so the bulbs peak at exactly `bulb_radius`
    /// when the neck closes.
    Dumbbell {
        bulb_radius: f64,
        neck_radius: f64,
        length: f64,
    },
    /// Straight segment at constant radius between the planes `x = 0` and
    /// `x = length` (bridge topology only).
    CylinderSegment { radius: f64, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitialShapeSpec {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub kind: ShapeKind,
    pub topology: Topology,
    /// Hypersurface dimension `n`.
    pub n: usize,
    /// Node count `N`.
    pub nodes: usize,
}

impl InitialShapeSpec {
    pub fn new(kind: ShapeKind, topology: Topology, n: usize, nodes: usize) -> Self {
        Self {
            kind,
            topology,
            n,
            nodes,
        }
    }

    pub fn hemisphere(radius: f64, nodes: usize) -> Self {
        Self::new(ShapeKind::Hemisphere { radius }, Topology::FreeBoundary, 2, nodes)
    }

    pub fn sphere(radius: f64, center_x: f64, nodes: usize) -> Self {
        Self::new(ShapeKind::Sphere { radius, center_x }, Topology::Closed, 2, nodes)
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn with_dim(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
}

fn require_positive(value: f64, field: &'static str) -> Result<(), CurveError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CurveError::InvalidSpec {
            field,
            reason: "must be positive",
        })
    }
}

fn require_topology(spec: &InitialShapeSpec, allowed: Topology) -> Result<(), CurveError> {
    if spec.topology == allowed {
        Ok(())
    } else {
        Err(CurveError::InvalidSpec {
            field: "topology",
            reason: "is not supported by this shape kind",
        })
    }
}

fn require_amplitude(amplitude: f64, radius: f64) -> Result<(), CurveError> {
    if amplitude.is_finite() && amplitude.abs() < radius {
        Ok(())
    } else {
        Err(CurveError::InvalidSpec {
            field: "amplitude",
            reason: "must be smaller in magnitude than the base radius",
        })
    }
}

fn require_modes(mode_count: u32) -> Result<(), CurveError> {
    if mode_count >= 1 {
        Ok(())
    } else {
        Err(CurveError::InvalidSpec {
            field: "mode_count",
            reason: "must be positive",
        })
    }
}

/// Builds the initial generating curve for a scenario.
///
/// Circular kinds are sampled in closed form; the others are sampled at
/// equal arc length on the exact parametric curve, so every node lies on
/// the analytic shape.
pub fn build_profile(spec: &InitialShapeSpec) -> Result<ProfileCurve, CurveError> {
    let n_nodes = spec.nodes;
    if n_nodes < MIN_NODES {
        return Err(CurveError::InvalidSpec {
            field: "nodes",
            reason: "must be at least 16",
        });
    }
    if spec.n < 2 {
        return Err(CurveError::InvalidSpec {
            field: "n",
            reason: "must be at least 2",
        });
    }
    let last = (n_nodes - 1) as f64;
    let nodes: Vec<Point> = match spec.kind {
        ShapeKind::Hemisphere { radius } => {
            require_positive(radius, "radius")?;
            require_topology(spec, Topology::FreeBoundary)?;
            (0..n_nodes)
                .map(|i| {
                    let theta = 0.5 * PI * i as f64 / last;
                    Point::new(radius * math::sin(theta), radius * math::cos(theta))
                })
                .collect()
        }
        ShapeKind::Sphere { radius, center_x } => {
            require_positive(radius, "radius")?;
            require_topology(spec, Topology::Closed)?;
            if !center_x.is_finite() {
                return Err(CurveError::InvalidSpec {
                    field: "center_x",
                    reason: "must be finite",
                });
            }
            (0..n_nodes)
                .map(|i| {
                    let theta = PI * i as f64 / last;
                    Point::new(center_x - radius * math::cos(theta), radius * math::sin(theta))
                })
                .collect()
        }
        ShapeKind::PerturbedHemisphere {
            radius,
            amplitude,
            mode_count,
        } => {
            require_positive(radius, "radius")?;
            require_amplitude(amplitude, radius)?;
            require_modes(mode_count)?;
            require_topology(spec, Topology::FreeBoundary)?;
            let degree = 2 * mode_count as usize;
            let polar = move |t: f64| {
                let phi = 0.5 * PI - t;
                let rho = radius + amplitude * math::legendre(degree, math::cos(phi));
                Point::new(rho * math::cos(phi), rho * math::sin(phi))
            };
            sample_chain(&[Piece::new(&polar, 0.0, 0.5 * PI)], n_nodes)
        }
        ShapeKind::PerturbedSphere {
            radius,
            center_x,
            amplitude,
            mode_count,
        } => {
            require_positive(radius, "radius")?;
            require_amplitude(amplitude, radius)?;
            require_modes(mode_count)?;
            require_topology(spec, Topology::Closed)?;
            let degree = 2 * mode_count as usize;
            let polar = move |t: f64| {
                let phi = PI - t;
                let rho = radius + amplitude * math::legendre(degree, math::cos(phi));
                Point::new(center_x + rho * math::cos(phi), rho * math::sin(phi))
            };
            sample_chain(&[Piece::new(&polar, 0.0, PI)], n_nodes)
        }
        ShapeKind::CosineBumpCylinder {
            base_radius,
            length,
            amplitude,
            mode_count,
        } => {
            require_positive(base_radius, "base_radius")?;
            require_positive(length, "length")?;
            require_amplitude(amplitude, base_radius)?;
            require_modes(mode_count)?;
            let wave = mode_count as f64 * PI / length;
            let r_start = base_radius + amplitude;
            let r_end = base_radius + amplitude * math::cos(wave * length);
            match spec.topology {
                Topology::FreeBoundary => {
                    let body = move |t: f64| Point::new(t, base_radius + amplitude * math::cos(wave * t));
                    let cap = move |t: f64| Point::new(length + r_end * math::sin(t), r_end * math::cos(t));
                    sample_chain(
                        &[Piece::new(&body, 0.0, length), Piece::new(&cap, 0.0, 0.5 * PI)],
                        n_nodes,
                    )
                }
                Topology::Closed => {
                    let x0 = r_start;
                    let left = move |t: f64| Point::new(x0 - r_start * math::cos(t), r_start * math::sin(t));
                    let body =
                        move |t: f64| Point::new(x0 + t, base_radius + amplitude * math::cos(wave * t));
                    let right =
                        move |t: f64| Point::new(x0 + length + r_end * math::sin(t), r_end * math::cos(t));
                    sample_chain(
                        &[
                            Piece::new(&left, 0.0, 0.5 * PI),
                            Piece::new(&body, 0.0, length),
                            Piece::new(&right, 0.0, 0.5 * PI),
                        ],
                        n_nodes,
                    )
                }
                Topology::Bridge => {
                    return Err(CurveError::InvalidSpec {
                        field: "topology",
                        reason: "is not supported by this shape kind",
                    })
                }
            }
        }
        ShapeKind::Dumbbell {
            bulb_radius,
            neck_radius,
            length,
        } => {
            require_positive(bulb_radius, "bulb_radius")?;
            require_positive(neck_radius, "neck_radius")?;
            require_positive(length, "length")?;
            require_topology(spec, Topology::Closed)?;
            if neck_radius >= bulb_radius {
                return Err(CurveError::InvalidSpec {
                    field: "neck_radius",
                    reason: "must be smaller than bulb_radius",
                });
            }
            let f = dumbbell_profile(bulb_radius, neck_radius, length);
            sample_chain(&[Piece::new(&f, 0.0, PI)], n_nodes)
        }
        ShapeKind::CylinderSegment { radius, length } => {
            require_positive(radius, "radius")?;
            require_positive(length, "length")?;
            require_topology(spec, Topology::Bridge)?;
            (0..n_nodes)
                .map(|i| Point::new(length * i as f64 / last, radius))
                .collect()
        }
    };
    let mut curve = ProfileCurve::from_nodes(nodes, spec.topology, spec.n);
    curve.impose_endpoint_constraints();
    if spec.topology == Topology::Bridge {
        if let ShapeKind::CylinderSegment { length, .. } = spec.kind {
            curve.nodes_mut()[n_nodes - 1].x = length;
        }
    }
    Ok(curve)
}

/// The dumbbell generating curve as a function of its angle parameter.
pub fn dumbbell_profile(bulb_radius: f64, neck_radius: f64, length: f64) -> impl Fn(f64) -> Point {
    let beta = 1.5 * math::sqrt(3.0) * bulb_radius;
    move |t: f64| {
        let c = math::cos(t);
        Point::new(
            0.5 * length * (1.0 - c),
            math::sin(t) * (neck_radius + (beta - neck_radius) * c * c),
        )
    }
}

struct Piece<'a> {
    f: &'a dyn Fn(f64) -> Point,
    t0: f64,
    t1: f64,
}

impl<'a> Piece<'a> {
    fn new(f: &'a dyn Fn(f64) -> Point, t0: f64, t1: f64) -> Self {
        Self { f, t0, t1 }
    }

    fn speed(&self, t: f64) -> f64 {
        let h = 1e-6 * (self.t1 - self.t0);
        ((self.f)(t + h) - (self.f)(t - h)).norm() / (2.0 * h)
    }

    /// Arc length on `[a, b]` by 5-point Gauss-Legendre.
    fn arc(&self, a: f64, b: f64) -> f64 {
        const NODES: [f64; 5] = [
            0.0,
            0.538_469_310_105_683_1,
            -0.538_469_310_105_683_1,
            0.906_179_845_938_664,
            -0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_47,
            0.478_628_670_499_366_47,
            0.236_926_885_056_189_08,
            0.236_926_885_056_189_08,
        ];
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        half * NODES
            .iter()
            .zip(WEIGHTS.iter())
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
    }
}

const ARC_TABLE_INTERVALS: usize = 2048;

/// Samples a chain of parametric pieces at equal arc length.
fn sample_chain(pieces: &[Piece<'_>], n: usize) -> Vec<Point> {
    struct Table {
        t: Vec<f64>,
        s: Vec<f64>,
    }
    let mut tables: Vec<Table> = Vec::with_capacity(pieces.len());
    let mut offset = 0.0;
    for piece in pieces {
        let m = ARC_TABLE_INTERVALS;
        let mut t = Vec::with_capacity(m + 1);
        let mut s = Vec::with_capacity(m + 1);
        t.push(piece.t0);
        s.push(offset);
        for j in 1..=m {
            let tj = piece.t0 + (piece.t1 - piece.t0) * j as f64 / m as f64;
            let sj = s[j - 1] + piece.arc(t[j - 1], tj);
            t.push(tj);
            s.push(sj);
        }
        offset = s[m];
        tables.push(Table { t, s });
    }
    let total = offset;
    let first = &pieces[0];
    let last = &pieces[pieces.len() - 1];
    let mut out = Vec::with_capacity(n);
    out.push((first.f)(first.t0));
    let (mut p, mut j) = (0, 0);
    for i in 1..n - 1 {
        let target = total * i as f64 / (n - 1) as f64;
        while p + 1 < tables.len() && tables[p].s[ARC_TABLE_INTERVALS] < target {
            p += 1;
            j = 0;
        }
        let table = &tables[p];
        while j + 1 < ARC_TABLE_INTERVALS && table.s[j + 1] < target {
            j += 1;
        }
        let piece = &pieces[p];
        let (ta, tb) = (table.t[j], table.t[j + 1]);
        let (sa, sb) = (table.s[j], table.s[j + 1]);
        let mut t = ta + (tb - ta) * (target - sa) / (sb - sa);
        for _ in 0..4 {
            let g = sa + piece.arc(ta, t) - target;
            t = (t - g / piece.speed(t)).clamp(ta, tb);
        }
        out.push((piece.f)(t));
    }
    out.push((last.f)(last.t1));
    out
}

/// Equal arc-length sampling of a single parametric curve on `[t0, t1]`.
pub fn sample_parametric(f: &dyn Fn(f64) -> Point, t0: f64, t1: f64, n: usize) -> Vec<Point> {
    sample_chain(&[Piece::new(f, t0, t1)], n)
}
