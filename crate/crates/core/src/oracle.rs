//! Independent reference values: closed-form round surfaces, Richardson
//! refinement, and a second quadrature for `∫ k dg` after integrating by
//! parts in the graph chart.

use alloc::vec::Vec;

use crate::curve::{build_profile, CurveError, InitialShapeSpec, Point, ProfileCurve, ShapeKind, Topology};
use crate::math;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid parameter `{0}`")]
    InvalidParams(&'static str),
    #[error("profile is not a graph over the axis at segment {segment}")]
    NotAGraph { segment: usize },
    #[error("refinement needs at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ReferenceKind {
    /// Sphere of the given radius centred on the axis at `x = radius`.
    Sphere { radius: f64 },
    Hemisphere { radius: f64 },
    CylinderSegment { radius: f64, length: f64 },
}

/// Analytic values at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferenceFrame {
    pub normal: Point,
    pub u: f64,
    pub u_tilde: f64,
    pub q: f64,
    pub k: f64,
    pub p: f64,
    pub mean_curvature: f64,
    pub a2: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferenceRecord {
    pub area: f64,
    pub volume: f64,
    pub mean_curvature: f64,
    pub k: f64,
    pub p: f64,
    pub frames: Vec<ReferenceFrame>,
}

/// A uniformly sampled round surface together with its exact geometry.
pub fn reference_surface(kind: ReferenceKind, n: usize, nodes: usize) -> Result<(ProfileCurve, ReferenceRecord), OracleError> {
    if n < 2 {
        return Err(OracleError::InvalidParams("n"));
    }
    let positive = |v: f64, name| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(OracleError::InvalidParams(name)) };
    let nf = n as f64;
    let (spec, area, volume, k, p, center) = match kind {
        ReferenceKind::Sphere { radius } => {
            positive(radius, "radius")?;
            let w = math::unit_ball_volume(n + 1);
            (
                InitialShapeSpec::new(ShapeKind::Sphere { radius, center_x: radius }, Topology::Closed, n, nodes),
                (nf + 1.0) * w * math::powi(radius, n),
                w * math::powi(radius, n + 1),
                1.0 / radius,
                1.0 / radius,
                Some(radius),
            )
        }
        ReferenceKind::Hemisphere { radius } => {
            positive(radius, "radius")?;
            let w = math::unit_ball_volume(n + 1);
            (
                InitialShapeSpec::new(ShapeKind::Hemisphere { radius }, Topology::FreeBoundary, n, nodes),
                0.5 * (nf + 1.0) * w * math::powi(radius, n),
                0.5 * w * math::powi(radius, n + 1),
                1.0 / radius,
                1.0 / radius,
                Some(0.0),
            )
        }
        ReferenceKind::CylinderSegment { radius, length } => {
            positive(radius, "radius")?;
            positive(length, "length")?;
            let w = math::unit_ball_volume(n);
            (
                InitialShapeSpec::new(ShapeKind::CylinderSegment { radius, length }, Topology::Bridge, n, nodes),
                nf * w * math::powi(radius, n - 1) * length,
                w * math::powi(radius, n) * length,
                0.0,
                1.0 / radius,
                None,
            )
        }
    };
    let curve = build_profile(&spec)?;
    let radius = match kind {
        ReferenceKind::Sphere { radius } | ReferenceKind::Hemisphere { radius } => radius,
        ReferenceKind::CylinderSegment { radius, .. } => radius,
    };
    let frames = curve
        .nodes()
        .iter()
        .map(|x| {
            let normal = match center {
                Some(c) => Point::new((x.x - c) / radius, x.r / radius),
                None => Point::new(0.0, 1.0),
            };
            let q = if x.r > 0.0 { normal.x / x.r } else { normal.x.signum() * f64::INFINITY };
            ReferenceFrame {
                normal,
                u: x.r,
                u_tilde: x.x,
                q,
                k,
                p,
                mean_curvature: k + (nf - 1.0) * p,
                a2: k * k + (nf - 1.0) * p * p,
            }
        })
        .collect();
    Ok((
        curve,
        ReferenceRecord {
            area,
            volume,
            mean_curvature: k + (nf - 1.0) * p,
            k,
            p,
            frames,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RefinementStatus {
    /// Successive differences vanish to rounding; no order is defined.
    Exact,
    Converged,
    /// Observed order below 1.
    NonConverging,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Refinement {
    /// `(node count, value)` per level.
    pub levels: Vec<(usize, f64)>,
    /// Second-order Richardson extrapolation of the last two levels.
    pub extrapolated: f64,
    /// `log2(|Q₁ - Q₂| / |Q₂ - Q₃|)` over the last three levels.
    pub observed_order: Option<f64>,
    pub status: RefinementStatus,
}

/// Node counts `(N - 1)·2^j + 1`, so every coarse node survives refinement.
pub fn refinement_counts(base: usize, levels: usize) -> Vec<usize> {
    (0..levels).map(|j| (base - 1) * (1 << j) + 1).collect()
}

/// Evaluates `quantity` on curves built by `source` at successively doubled
/// resolutions and extrapolates assuming second order.
pub fn refine<S, Q>(source: S, quantity: Q, base_nodes: usize, levels: usize) -> Result<Refinement, OracleError>
where
    S: Fn(usize) -> Result<ProfileCurve, OracleError>,
    Q: Fn(&ProfileCurve) -> f64,
{
    if levels < 3 {
        return Err(OracleError::TooFewLevels(levels));
    }
    let mut values = Vec::with_capacity(levels);
    for n in refinement_counts(base_nodes, levels) {
        values.push((n, quantity(&source(n)?)));
    }
    Ok(summarize(values))
}

/// [`refine`] on resamplings of a fixed polyline. Converges to the value on
/// that polyline, not on the smooth curve it was sampled from.
pub fn refine_curve<Q>(quantity: Q, curve: &ProfileCurve, levels: usize) -> Result<Refinement, OracleError>
where
    Q: Fn(&ProfileCurve) -> f64,
{
    refine(|n| Ok(curve.resample(n)?), quantity, curve.len(), levels)
}

fn summarize(levels: Vec<(usize, f64)>) -> Refinement {
    let k = levels.len();
    let (q1, q2, q3) = (levels[k - 3].1, levels[k - 2].1, levels[k - 1].1);
    let scale = q3.abs().max(1.0);
    let (d1, d2) = ((q1 - q2).abs(), (q2 - q3).abs());
    let extrapolated = q3 + (q3 - q2) / 3.0;
    if d1 <= 1e-13 * scale && d2 <= 1e-13 * scale {
        return Refinement {
            levels,
            extrapolated: q3,
            observed_order: None,
            status: RefinementStatus::Exact,
        };
    }
    let order = math::ln(d1 / d2) / core::f64::consts::LN_2;
    let status = if order >= 1.0 {
        RefinementStatus::Converged
    } else {
        RefinementStatus::NonConverging
    };
    Refinement {
        levels,
        extrapolated,
        observed_order: Some(order),
        status,
    }
}

/// `∫ k dg` evaluated as `σ_{n-1}(n-1) ∫ arctan(ρ') ρ' ρ^{n-2} dx` over the
/// graph `r = ρ(x)`.
///
/// The boundary terms of the integration by parts vanish at a plane contact
/// (`ρ' = 0`) and at a pole (`ρ = 0`). On each segment `ρ'` is the chord slope
/// and `ρ^{n-2}` is taken at the midpoint.
pub fn k_integral_by_parts(curve: &ProfileCurve) -> Result<f64, OracleError> {
    let n = curve.dim();
    let mut sum = 0.0;
    for (i, s) in curve.nodes().windows(2).enumerate() {
        let dx = s[1].x - s[0].x;
        if !(dx > 0.0) {
            return Err(OracleError::NotAGraph { segment: i });
        }
        let dr = s[1].r - s[0].r;
        let slope = dr / dx;
        sum += math::atan(slope) * dr * math::powi(0.5 * (s[0].r + s[1].r), n - 2);
    }
    Ok(math::unit_sphere_area(n) * (n - 1) as f64 * sum)
}
