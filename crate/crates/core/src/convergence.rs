//! Deciding when a flow has reached its round limit.
//!
//! The limit radius is predicted from the enclosed volume alone, so the
//! shape deviation measures distance from the expected limit rather than
//! from a best fit.

use alloc::vec::Vec;

use crate::curve::Topology;
use crate::flow::{Control, FlowMode, FlowState, Observer};
use crate::geometry;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceReport {
    pub t: f64,
    pub sup_dev_h: f64,
    pub l2_dev_h: f64,
    pub fitted_radius: f64,
    pub fitted_center_x: f64,
    pub shape_dev: f64,
    pub converged: bool,
}

/// Convergence thresholds. `cmc = None` means `1e-4 · n / radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Tolerances {
    pub cmc: Option<f64>,
    /// Relative to the limit radius.
    pub shape: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cmc: None,
            shape: 1e-3,
        }
    }
}

impl Tolerances {
    pub fn cmc_for(&self, n: usize, radius: f64) -> f64 {
        self.cmc.unwrap_or(1e-4 * n as f64 / radius)
    }
}

/// `(max |H - h|, area-weighted RMS of H - h)`.
pub fn cmc_deviation(state: &FlowState) -> (f64, f64) {
    let curve = state.curve();
    let m = curve.dim() - 1;
    let w = geometry::node_weights(curve);
    let h = state.h();
    let (mut sup, mut num, mut den) = (0.0f64, 0.0, 0.0);
    for ((f, node), wi) in state.frames().iter().zip(curve.nodes()).zip(&w) {
        let dev = f.mean_curvature - h;
        sup = sup.max(dev.abs());
        let g = math::powi(node.r, m) * wi;
        num += dev * dev * g;
        den += g;
    }
    (sup, math::sqrt(num / den))
}

/// Radius and axial centre of the round surface with the same volume, and
/// the largest node distance from it.
///
/// Free boundary: a half-ball centred on the plane, `ρ = (2V/ω_{n+1})^{1/(n+1)}`.
/// Closed: a ball, `ρ = (V/ω_{n+1})^{1/(n+1)}`, centred at the volume centroid.
pub fn fit_limit_shape(state: &FlowState) -> (f64, f64, f64) {
    let curve = state.curve();
    let n = curve.dim();
    let w = math::unit_ball_volume(n + 1);
    let v = state.volume();
    let (radius, center) = match curve.topology() {
        Topology::Closed => {
            let (mut num, mut den) = (0.0, 0.0);
            for s in curve.nodes().windows(2) {
                let (ra, rb) = (math::powi(s[0].r, n), math::powi(s[1].r, n));
                let dx = s[1].x - s[0].x;
                num += 0.5 * (s[0].x * ra + s[1].x * rb) * dx;
                den += 0.5 * (ra + rb) * dx;
            }
            (math::pow(v / w, 1.0 / (n + 1) as f64), num / den)
        }
        Topology::FreeBoundary | Topology::Bridge => (math::pow(2.0 * v / w, 1.0 / (n + 1) as f64), 0.0),
    };
    let dev = curve
        .nodes()
        .iter()
        .map(|p| (math::hypot(p.x - center, p.r) - radius).abs())
        .fold(0.0, f64::max);
    (radius, center, dev)
}

pub fn is_converged(state: &FlowState, tol: &Tolerances) -> ConvergenceReport {
    let (sup, l2) = cmc_deviation(state);
    let (radius, center, dev) = fit_limit_shape(state);
    let tol_cmc = tol.cmc_for(state.curve().dim(), radius);
    ConvergenceReport {
        t: state.t(),
        sup_dev_h: sup,
        l2_dev_h: l2,
        fitted_radius: radius,
        fitted_center_x: center,
        shape_dev: dev,
        converged: sup <= tol_cmc && dev <= tol.shape * radius,
    }
}

/// Stops a run once [`is_converged`] holds. Disabled for plain mean
/// curvature flow, whose round limit is a point.
#[derive(Debug, Clone)]
pub struct ConvergenceObserver {
    tol: Tolerances,
    enabled: bool,
    last: Option<ConvergenceReport>,
    history: Vec<(f64, f64)>,
}

impl ConvergenceObserver {
    pub fn new(tol: Tolerances, mode: FlowMode) -> Self {
        Self {
            tol,
            enabled: mode == FlowMode::VolumePreserving,
            last: None,
            history: Vec::new(),
        }
    }

    pub fn last_report(&self) -> Option<&ConvergenceReport> {
        self.last.as_ref()
    }

    /// Observed `(t, sup |H - h|)` pairs.
    pub fn history(&self) -> &[(f64, f64)] {
        &self.history
    }

    pub fn evaluate(&mut self, state: &FlowState) -> ConvergenceReport {
        let report = is_converged(state, &self.tol);
        self.history.push((report.t, report.sup_dev_h));
        self.last = Some(report);
        report
    }

    /// Least-squares slope of `-ln sup |H - h|` against `t` over the later
    /// half of the history; `None` with fewer than four usable points.
    pub fn empirical_rate(&self) -> Option<f64> {
        let tail: Vec<(f64, f64)> = self.history[self.history.len() / 2..]
            .iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|&(t, s)| (t, math::ln(s)))
            .collect();
        if tail.len() < 4 {
            return None;
        }
        let k = tail.len() as f64;
        let mt = tail.iter().map(|p| p.0).sum::<f64>() / k;
        let my = tail.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = tail.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        (sxx > 0.0).then(|| -sxy / sxx)
    }
}

impl Observer for ConvergenceObserver {
    fn observe(&mut self, state: &FlowState) -> Control {
        let report = self.evaluate(state);
        if self.enabled && report.converged {
            Control::Converged
        } else {
            Control::Continue
        }
    }
}
