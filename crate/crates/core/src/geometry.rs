//! Pointwise and integral geometry of a surface of revolution.
//!
//! Notation: `u = r` is the height over the axis, `ũ = x` the distance from
//! the plane `x = 0`, `ν` the outward unit normal of the meridian, `k` the
//! meridian curvature and `p = ν_r / r` the rotational one. `H = k + (n-1)p`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::curve::{EndKind, Point, ProfileCurve, Topology};
use crate::math;

/// Below this `|⟨ν, ω⟩|` (or `|⟨ν, i₁⟩|`) the reciprocal is reported as `+∞`.
pub const RECIPROCAL_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq)]
pub enum GeometryError {
    #[error("pinch at node {node}: r = {r:e}")]
    Pinch { node: usize, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PointFrame {
    pub tangent: Point,
    /// Outward unit normal.
    pub normal: Point,
    pub u: f64,
    pub u_tilde: f64,
    /// `1/⟨ν, ω⟩`, `+∞` where the normal is (nearly) axial.
    pub v: f64,
    /// `1/⟨ν, i₁⟩`, `+∞` where the normal is (nearly) radial.
    pub v_tilde: f64,
    /// `⟨ν, i₁⟩ / u`; `±∞` at a pole.
    pub q: f64,
    pub k: f64,
    pub p: f64,
    /// Mean curvature `k + (n-1)p`.
    pub mean_curvature: f64,
    /// `|A|² = k² + (n-1)p²`.
    pub a2: f64,
    /// `k³ + (n-1)p³`.
    pub c3: f64,
}

impl PointFrame {
    /// Axial component of the normal, `⟨ν, i₁⟩`.
    pub fn nu_x(&self) -> f64 {
        self.normal.x
    }
}

fn reciprocal(c: f64, signed: bool) -> f64 {
    if (signed && c.abs() <= RECIPROCAL_FLOOR) || (!signed && c <= RECIPROCAL_FLOOR) {
        f64::INFINITY
    } else {
        1.0 / c
    }
}

/// Per-node frames and curvatures.
///
/// The tangent uses the second-order nonuniform difference
/// `h₋²(X₊ - X) + h₊²(X - X₋)`, the curvature `k = -⟨X'', ν⟩` with
/// `X'' = 2[(X₊ - X)/h₊ - (X - X₋)/h₋]/(h₊ + h₋)` on chord lengths. Both are
/// exact for nodes on a circle, whatever the spacing.
pub fn frames(curve: &ProfileCurve) -> Result<Vec<PointFrame>, GeometryError> {
    let nodes = curve.nodes();
    let last = nodes.len() - 1;
    if let Some(i) = (1..last).find(|&i| !(nodes[i].r > 0.0)) {
        return Err(GeometryError::Pinch {
            node: i,
            r: nodes[i].r,
        });
    }
    let m = (curve.dim() - 1) as f64;
    let mut out = Vec::with_capacity(nodes.len());
    for i in 0..nodes.len() {
        let x = nodes[i];
        let (xm, xp) = (curve.prev(i), curve.next(i));
        let (dm, dp) = (x - xm, xp - x);
        let (hm, hp) = (dm.norm(), dp.norm());
        let t = dp * (hm * hm) + dm * (hp * hp);
        let tangent = t * (1.0 / t.norm());
        let normal = tangent.perp();
        let second = (dp * (1.0 / hp) - dm * (1.0 / hm)) * (2.0 / (hp + hm));
        let k = -second.dot(normal);
        let pole = curve.is_pole(i);
        let (p, q) = if pole {
            (k, normal.x.signum() * f64::INFINITY)
        } else {
            (normal.r / x.r, normal.x / x.r)
        };
        out.push(PointFrame {
            tangent,
            normal,
            u: x.r,
            u_tilde: x.x,
            v: reciprocal(normal.r, false),
            v_tilde: reciprocal(normal.x, true),
            q,
            k,
            p,
            mean_curvature: k + m * p,
            a2: k * k + m * p * p,
            c3: k * k * k + m * p * p * p,
        });
    }
    Ok(out)
}

/// Trapezoidal node weights in arc length, `(h₋ + h₊)/2` (one half-segment at the ends).
pub fn node_weights(curve: &ProfileCurve) -> Vec<f64> {
    let h = curve.segment_lengths();
    let n = curve.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { h[i - 1] } else { 0.0 };
            let right = if i + 1 < n { h[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Hypersurface area `σ_{n-1} ∫ r^{n-1} ds`, trapezoidal per segment.
pub fn surface_area(curve: &ProfileCurve) -> f64 {
    let m = curve.dim() - 1;
    let sum: f64 = curve
        .nodes()
        .windows(2)
        .map(|w| 0.5 * (math::powi(w[0].r, m) + math::powi(w[1].r, m)) * (w[1] - w[0]).norm())
        .sum();
    math::unit_sphere_area(curve.dim()) * sum
}

/// Enclosed volume `ω_n ∮ rⁿ dx`, signed by orientation.
///
/// For a free-boundary curve this is the region between the surface and
/// the plane; for a bridge curve the region between the two planes.
pub fn enclosed_volume(curve: &ProfileCurve) -> f64 {
    let n = curve.dim();
    let sum: f64 = curve
        .nodes()
        .windows(2)
        .map(|w| 0.5 * (math::powi(w[0].r, n) + math::powi(w[1].r, n)) * (w[1].x - w[0].x))
        .sum();
    math::unit_ball_volume(n) * sum
}

/// Gradient of [`enclosed_volume`] with respect to every node position.
pub fn volume_gradient(curve: &ProfileCurve) -> Vec<Point> {
    let n = curve.dim();
    let omega = math::unit_ball_volume(n);
    let nodes = curve.nodes();
    let last = nodes.len() - 1;
    let rn = |i: usize| math::powi(nodes[i].r, n);
    let drn = |i: usize| n as f64 * math::powi(nodes[i].r, n - 1);
    (0..nodes.len())
        .map(|i| {
            let (gx, gr) = if i == 0 {
                (-(rn(0) + rn(1)), drn(0) * (nodes[1].x - nodes[0].x))
            } else if i == last {
                (rn(last - 1) + rn(last), drn(last) * (nodes[last].x - nodes[last - 1].x))
            } else {
                (rn(i - 1) - rn(i + 1), drn(i) * (nodes[i + 1].x - nodes[i - 1].x))
            };
            Point::new(0.5 * omega * gx, 0.5 * omega * gr)
        })
        .collect()
}

/// Area average of the mean curvature, `∫H dg / ∫dg`.
pub fn mean_h(curve: &ProfileCurve, frames: &[PointFrame]) -> f64 {
    let m = curve.dim() - 1;
    let w = node_weights(curve);
    let (mut num, mut den) = (0.0, 0.0);
    for ((node, f), wi) in curve.nodes().iter().zip(frames).zip(&w) {
        let g = math::powi(node.r, m) * wi;
        num += f.mean_curvature * g;
        den += g;
    }
    num / den
}

/// `∫ k dg` by the same quadrature as [`mean_h`].
pub fn k_integral(curve: &ProfileCurve, frames: &[PointFrame]) -> f64 {
    let m = curve.dim() - 1;
    let w = node_weights(curve);
    let sum: f64 = curve
        .nodes()
        .iter()
        .zip(frames)
        .zip(&w)
        .map(|((node, f), wi)| f.k * math::powi(node.r, m) * wi)
        .sum();
    math::unit_sphere_area(curve.dim()) * sum
}

/// Which pole a cap is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Side {
    Left,
    Right,
}

/// Linear interpolation point between two adjacent nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut {
    /// Node on the cylinder side of the cut.
    pub outer: usize,
    /// Node on the cap side of the cut.
    pub inner: usize,
    /// Fraction of the way from `outer` to `inner`.
    pub lambda: f64,
    pub point: Point,
}

impl Cut {
    pub fn interpolate(&self, values: &[f64]) -> f64 {
        values[self.outer] + self.lambda * (values[self.inner] - values[self.outer])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cap {
    pub side: Side,
    pub nodes: Range<usize>,
    /// `None` when the cap swallows the whole curve.
    pub cut: Option<Cut>,
    /// Axial position of the cut plane `L_α`.
    pub cut_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub alpha: f64,
    pub caps: Vec<Cap>,
    pub cylinder: Range<usize>,
    /// Set when some cap found no node violating the cap inequality.
    pub degenerate: bool,
}

impl Decomposition {
    pub fn cap(&self, side: Side) -> Option<&Cap> {
        self.caps.iter().find(|c| c.side == side)
    }

    pub fn in_cap(&self, i: usize) -> bool {
        self.caps.iter().any(|c| c.nodes.contains(&i))
    }
}

/// Splits the curve into the pole caps `{⟨ν, i₁⟩ > 1/α}` (mirrored on a left
/// cap) and the cylindrical part in between.
///
/// # Panics
/// If `alpha <= 1`.
pub fn decompose(curve: &ProfileCurve, frames: &[PointFrame], alpha: f64) -> Decomposition {
    assert!(alpha > 1.0, "alpha must exceed 1");
    let thresh = 1.0 / alpha;
    let nodes = curve.nodes();
    let last = nodes.len() - 1;
    let mut caps = Vec::new();
    let mut degenerate = false;
    let mut cyl_start = 0;
    let mut cyl_end = nodes.len();

    let make_cut = |outer: usize, inner: usize, a: f64, b: f64| {
        let lambda = ((thresh - a) / (b - a)).clamp(0.0, 1.0);
        let point = nodes[outer] + (nodes[inner] - nodes[outer]) * lambda;
        Cut {
            outer,
            inner,
            lambda,
            point,
        }
    };

    if curve.topology().left_end() == EndKind::Pole {
        let incl = |i: usize| -frames[i].normal.x;
        let mut j = 0;
        while j <= last && incl(j) > thresh {
            j += 1;
        }
        let cap = if j > last {
            degenerate = true;
            Cap {
                side: Side::Left,
                nodes: 0..nodes.len(),
                cut: None,
                cut_x: nodes[last].x,
            }
        } else {
            let cut = (j > 0).then(|| make_cut(j, j - 1, incl(j), incl(j - 1)));
            Cap {
                side: Side::Left,
                nodes: 0..j,
                cut_x: cut.map_or(nodes[0].x, |c| c.point.x),
                cut,
            }
        };
        cyl_start = cap.nodes.end;
        caps.push(cap);
    }
    if curve.topology().right_end() == EndKind::Pole {
        let incl = |i: usize| frames[i].normal.x;
        let mut j = last as isize;
        while j >= 0 && incl(j as usize) > thresh {
            j -= 1;
        }
        let cap = if j < 0 {
            degenerate = true;
            Cap {
                side: Side::Right,
                nodes: 0..nodes.len(),
                cut: None,
                cut_x: nodes[0].x,
            }
        } else {
            let j = j as usize;
            let cut = (j < last).then(|| make_cut(j, j + 1, incl(j), incl(j + 1)));
            Cap {
                side: Side::Right,
                nodes: j + 1..nodes.len(),
                cut_x: cut.map_or(nodes[last].x, |c| c.point.x),
                cut,
            }
        };
        cyl_end = cap.nodes.start;
        caps.push(cap);
    }
    let cylinder = if cyl_start < cyl_end {
        cyl_start..cyl_end
    } else {
        cyl_start..cyl_start
    };
    Decomposition {
        alpha,
        caps,
        cylinder,
        degenerate,
    }
}

/// Reflection parity of a field across a plane end (`x = 0` or the bridge plane).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// `f(-s) = f(s)`; the default for curvatures and `u`.
    Even,
    /// `f(-s) = 2f(0) - f(s)`; for `ũ`, which is odd about the plane.
    Odd,
}

fn ghost_values(curve: &ProfileCurve, f: &[f64], parity: Parity) -> (f64, f64) {
    let last = f.len() - 1;
    let reflect = |edge: f64, nb: f64, kind: EndKind| match (kind, parity) {
        (EndKind::Plane, Parity::Odd) => 2.0 * edge - nb,
        _ => nb,
    };
    (
        reflect(f[0], f[1], curve.topology().left_end()),
        reflect(f[last], f[last - 1], curve.topology().right_end()),
    )
}

/// Axisymmetric Laplace-Beltrami operator `Δf = r^{1-n}(r^{n-1} f')'`.
///
/// Finite-volume form with face radii averaged from the two adjacent nodes;
/// at a pole the smooth limit `Δf = n f''` is used.
pub fn laplace_beltrami(curve: &ProfileCurve, field: &[f64], parity: Parity) -> Vec<f64> {
    let nodes = curve.nodes();
    let len = nodes.len();
    assert_eq!(field.len(), len, "one field value per node");
    let m = curve.dim() - 1;
    let n = curve.dim() as f64;
    let (g_left, g_right) = ghost_values(curve, field, parity);
    let mut out = vec![0.0; len];
    for i in 0..len {
        let (xm, xp) = (curve.prev(i), curve.next(i));
        let x = nodes[i];
        let fm = if i == 0 { g_left } else { field[i - 1] };
        let fp = if i == len - 1 { g_right } else { field[i + 1] };
        let (hm, hp) = ((x - xm).norm(), (xp - x).norm());
        if curve.is_pole(i) {
            let nb = if i == 0 { fp } else { fm };
            let h = if i == 0 { hp } else { hm };
            out[i] = n * 2.0 * (nb - field[i]) / (h * h);
            continue;
        }
        let rm = math::powi(0.5 * (x.r + xm.r), m);
        let rp = math::powi(0.5 * (x.r + xp.r), m);
        let flux = rp * (fp - field[i]) / hp - rm * (field[i] - fm) / hm;
        out[i] = flux / (math::powi(x.r, m) * 0.5 * (hm + hp));
    }
    out
}

/// Arc-length derivative `f'` by the nonuniform second-order centred stencil.
pub fn arc_derivative(curve: &ProfileCurve, field: &[f64], parity: Parity) -> Vec<f64> {
    let nodes = curve.nodes();
    let len = nodes.len();
    let (g_left, g_right) = ghost_values(curve, field, parity);
    (0..len)
        .map(|i| {
            let hm = (nodes[i] - curve.prev(i)).norm();
            let hp = (curve.next(i) - nodes[i]).norm();
            let fm = if i == 0 { g_left } else { field[i - 1] };
            let fp = if i == len - 1 { g_right } else { field[i + 1] };
            (hm * hm * (fp - field[i]) + hp * hp * (field[i] - fm)) / (hm * hp * (hm + hp))
        })
        .collect()
}

/// Smallest segment length.
pub fn min_spacing(curve: &ProfileCurve) -> f64 {
    curve
        .segment_lengths()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Whether the topology carries a left pole (and so a left cap).
pub fn has_left_pole(topology: Topology) -> bool {
    topology.left_end() == EndKind::Pole
}
