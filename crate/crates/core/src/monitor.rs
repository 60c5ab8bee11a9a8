//! Runtime checks of the a-priori estimates along a flow.
//!
//! A [`BoundLedger`] is built once from the initial surface; every observed
//! state is then measured against it. Checks come in three classes: bounds
//! the flow must satisfy, the standing lower-height assumption those bounds
//! rest on, and diagnostics that are only recorded.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::curve::{EndKind, ProfileCurve, Topology};
use crate::flow::{FlowMode, FlowState};
use crate::geometry::{self, Decomposition, Parity, PointFrame, Side};
use crate::math::{self, PI};

/// `p` below this is excluded from the `k/p` ratio.
pub const P_FLOOR: f64 = 1e-8;
/// Relative slack on the `k/p` bound.
pub const KP_TOLERANCE: f64 = 1e-3;
/// Lower slack on `h ≥ 0`, relative to `c₁`.
pub const H_LOWER_TOLERANCE: f64 = 1e-8;
/// Slack on `H ≥ 0` at the cut, relative to `max |H|`.
pub const H_CUT_TOLERANCE: f64 = 1e-6;
/// Relative slack on the cylinder bound for `v`.
pub const V_TOLERANCE: f64 = 0.05;
/// Window (in steps) for the `|A|²` non-divergence check.
pub const A2_WINDOW: u64 = 1000;

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq)]
pub enum MonitorError {
    #[error("no positive threshold c(α) available for α = {alpha}")]
    MissingThreshold { alpha: f64 },
    #[error("α = {alpha} must exceed 1")]
    InvalidAlpha { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PinchStatus {
    Ok,
    Neck { node: usize, r_min: f64 },
}

/// Looks for a neck: an interior local minimum of `r` below `epsilon`.
///
/// Only local minima count, so nodes next to a pole (small `r`, but rising
/// away from the axis) are never flagged. A free-boundary contact node is a
/// candidate too, since the contact circle can shrink onto the axis.
pub fn pinch_guard(curve: &ProfileCurve, epsilon: f64) -> PinchStatus {
    let nodes = curve.nodes();
    let last = nodes.len() - 1;
    let mut worst: Option<(usize, f64)> = None;
    let mut consider = |i: usize, r: f64| {
        if worst.is_none_or(|(_, w)| r < w) {
            worst = Some((i, r));
        }
    };
    for i in 0..=last {
        if curve.is_pole(i) {
            continue;
        }
        let r = nodes[i].r;
        let interior = i > 0 && i < last;
        if interior && r <= 0.0 {
            consider(i, r);
            continue;
        }
        let left = if i > 0 { nodes[i - 1].r } else { curve.prev(i).r };
        let right = if i < last { nodes[i + 1].r } else { curve.next(i).r };
        if r < epsilon && r <= left && r <= right {
            consider(i, r);
        }
    }
    match worst {
        Some((node, r_min)) => PinchStatus::Neck { node, r_min },
        None => PinchStatus::Ok,
    }
}

/// Where a threshold `c(α)` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ThresholdSource {
    /// Half the minimum height over the initial cylindrical part.
    Measured,
    Override,
}

/// Ledger constants that depend on the inclination parameter `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlphaBounds {
    pub alpha: f64,
    pub c_alpha: f64,
    pub source: ThresholdSource,
    /// Axial extent bound.
    pub l: f64,
    /// Generating-curve length bound.
    pub c_star: f64,
    /// Upper bound for `h`.
    pub c1: f64,
    /// Largest `v` over the initial cylindrical part.
    pub v0_max: f64,
    /// Cylinder bound for `v` before slack.
    pub v_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundLedger {
    pub topology: Topology,
    pub n: usize,
    pub area0: f64,
    /// Enclosed volume `V`.
    pub volume: f64,
    /// Height bound `R`.
    pub r_bound: f64,
    /// `max(1, max k/p)` on the initial surface.
    pub kp0: f64,
    /// Isoperimetric lower bound for the area at volume `V`.
    pub area_floor: f64,
    pub t_burn: f64,
    pub alphas: Vec<AlphaBounds>,
}

impl BoundLedger {
    /// The tightest `h` bound over the monitored `α`.
    pub fn c1(&self) -> f64 {
        self.alphas.iter().map(|a| a.c1).fold(f64::INFINITY, f64::min)
    }

    pub fn bounds_for(&self, alpha: f64) -> Option<&AlphaBounds> {
        self.alphas.iter().find(|a| same_alpha(a.alpha, alpha))
    }
}

fn same_alpha(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Least area of a surface in the topology's class enclosing volume `V`:
/// the half-sphere on the plane for a free boundary, the sphere otherwise.
pub fn isoperimetric_floor(topology: Topology, n: usize, volume: f64) -> f64 {
    let w = math::unit_ball_volume(n + 1);
    let e = n as f64 / (n + 1) as f64;
    match topology {
        Topology::Closed => (n + 1) as f64 * w * math::pow(volume / w, e),
        Topology::FreeBoundary | Topology::Bridge => {
            0.5 * (n + 1) as f64 * w * math::pow(2.0 * volume / w, e)
        }
    }
}

fn cylinder_extremes(decomp: &Decomposition, frames: &[PointFrame]) -> Option<(f64, usize, f64)> {
    let range = decomp.cylinder.clone();
    if range.is_empty() {
        return None;
    }
    let (mut min_u, mut at, mut max_v) = (f64::INFINITY, range.start, 0.0f64);
    for i in range {
        if frames[i].u < min_u {
            min_u = frames[i].u;
            at = i;
        }
        max_v = max_v.max(if frames[i].v.is_finite() { frames[i].v } else { f64::INFINITY });
    }
    Some((min_u, at, max_v))
}

/// Builds the ledger from the initial state.
///
/// `c_alpha` holds `(α, c(α))` overrides; any monitored `α` without one gets
/// half the minimum height over its initial cylindrical part.
pub fn ledger_from_initial(
    state0: &FlowState,
    c_alpha: &[(f64, f64)],
    alpha_list: &[f64],
    t_burn: f64,
) -> Result<BoundLedger, MonitorError> {
    let curve = state0.curve();
    let frames = state0.frames();
    let n = curve.dim();
    let nf = n as f64;
    let topology = curve.topology();
    let closed = topology == Topology::Closed;
    let omega = math::unit_ball_volume(n);
    let sigma = math::unit_sphere_area(n);
    let area0 = state0.area();
    let volume = state0.volume();
    let r_bound = if closed {
        math::pow(area0 / (2.0 * omega), 1.0 / nf)
    } else {
        math::pow(area0 / omega, 1.0 / nf)
    };
    let area_floor = isoperimetric_floor(topology, n, volume);
    let kp0 = max_kp_ratio(frames).0.max(1.0);

    let mut alphas = Vec::with_capacity(alpha_list.len());
    for &alpha in alpha_list {
        if !(alpha > 1.0) {
            return Err(MonitorError::InvalidAlpha { alpha });
        }
        let decomp = geometry::decompose(curve, frames, alpha);
        let extremes = cylinder_extremes(&decomp, frames);
        let (c, source) = match c_alpha.iter().find(|(a, _)| same_alpha(*a, alpha)) {
            Some(&(_, c)) => (c, ThresholdSource::Override),
            None => match extremes {
                Some((min_u, _, _)) => (0.5 * min_u, ThresholdSource::Measured),
                None => return Err(MonitorError::MissingThreshold { alpha }),
            },
        };
        if !(c > 0.0 && c.is_finite()) {
            return Err(MonitorError::MissingThreshold { alpha });
        }
        let caps = if closed { 2.0 } else { 1.0 };
        let c_pow = math::powi(c, n - 1);
        let tilt = math::sqrt(alpha * alpha - 1.0);
        let l = area0 / (nf * omega * c_pow) + caps * r_bound * tilt;
        let c_star = area0 / (sigma * c_pow) + caps * (l + r_bound);
        let c1 = sigma * (nf - 1.0) * math::powi(r_bound, n - 2) * (l + 0.5 * PI * c_star) / area_floor;
        let v0_max = extremes.map_or(1.0, |e| e.2);
        let v_bound = (alpha / tilt)
            .max(1.0)
            .max(v0_max)
            .max(2.0 * c1 * r_bound / (nf - 1.0));
        alphas.push(AlphaBounds {
            alpha,
            c_alpha: c,
            source,
            l,
            c_star,
            c1,
            v0_max,
            v_bound,
        });
    }
    Ok(BoundLedger {
        topology,
        n,
        area0,
        volume,
        r_bound,
        kp0,
        area_floor,
        t_burn,
        alphas,
    })
}

/// Largest `k/p` over nodes with `p > P_FLOOR`, and where it occurs.
pub fn max_kp_ratio(frames: &[PointFrame]) -> (f64, Option<usize>) {
    let mut best = (f64::NEG_INFINITY, None);
    for (i, f) in frames.iter().enumerate() {
        if f.p > P_FLOOR {
            let r = f.k / f.p;
            if r > best.0 {
                best = (r, Some(i));
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CheckClass {
    /// A proven estimate; failing it while the assumption holds is a hard failure.
    Bound,
    /// The standing lower-height assumption.
    Assumption,
    /// Recorded only.
    Diagnostic,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckResult {
    pub id: String,
    pub class: CheckClass,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    /// `(bound - measured)/|bound|` for upper bounds, mirrored for lower bounds.
    pub margin: f64,
    pub location: Option<usize>,
}

/// Scalar measurements shared with the time-series output.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Measurements {
    pub max_u: f64,
    pub max_u_tilde: f64,
    pub curve_length: f64,
    /// Right pole.
    pub d: f64,
    /// Left pole; `NaN` without one.
    pub e: f64,
    pub max_kp_ratio: f64,
    pub max_a2: f64,
    pub max_grad_a: f64,
    pub min_cyl_u_sqrt2: f64,
    pub v_tilde_max_cap_sqrt2: f64,
    pub h_at_sqrt2_cut: f64,
    /// `L_√2` cut positions (right, then left when present).
    pub cut_x_sqrt2: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonitorReport {
    pub t: f64,
    pub step: u64,
    pub checks: Vec<CheckResult>,
    pub worst_margin: f64,
    pub measurements: Measurements,
    /// Some bound failed while every assumption check passed.
    pub hard_fail: bool,
}

impl MonitorReport {
    pub fn check(&self, id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn assumption_holds(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| c.class == CheckClass::Assumption)
            .all(|c| c.passed)
    }
}

struct Builder {
    checks: Vec<CheckResult>,
}

impl Builder {
    fn upper(&mut self, id: String, class: CheckClass, measured: f64, bound: f64, strict: bool, slack: f64, location: Option<usize>) {
        let limit = bound + slack;
        let passed = if strict { measured < limit } else { measured <= limit };
        self.checks.push(CheckResult {
            id,
            class,
            passed,
            measured,
            bound,
            margin: (bound - measured) / bound.abs(),
            location,
        });
    }

    fn lower(&mut self, id: String, class: CheckClass, measured: f64, bound: f64, strict: bool, slack: f64, location: Option<usize>) {
        let limit = bound - slack;
        let passed = if strict { measured > limit } else { measured >= limit };
        let scale = if bound != 0.0 { bound.abs() } else { slack.max(f64::MIN_POSITIVE) };
        self.checks.push(CheckResult {
            id,
            class,
            passed,
            measured,
            bound,
            margin: (measured - bound) / scale,
            location,
        });
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> (f64, usize) {
    values
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |acc, (i, v)| if v > acc.0 { (v, i) } else { acc })
}

fn alpha_tag(alpha: f64) -> String {
    if same_alpha(alpha, math::sqrt(2.0)) {
        String::from("sqrt2")
    } else {
        format!("{alpha}")
    }
}

/// Largest `|∇A|` with the full axisymmetric reduction.
pub fn max_grad_a(curve: &ProfileCurve, frames: &[PointFrame]) -> f64 {
    let m = (curve.dim() - 1) as f64;
    let k: Vec<f64> = frames.iter().map(|f| f.k).collect();
    let p: Vec<f64> = frames.iter().map(|f| f.p).collect();
    let dk = geometry::arc_derivative(curve, &k, Parity::Even);
    let dp = geometry::arc_derivative(curve, &p, Parity::Even);
    (0..frames.len())
        .map(|i| math::sqrt(dk[i] * dk[i] + 3.0 * m * dp[i] * dp[i]))
        .fold(0.0, f64::max)
}

/// Evaluates checks (a)-(i) and (k) on one state. The stateful check (j)
/// lives in [`Monitor`].
pub fn evaluate(state: &FlowState, ledger: &BoundLedger) -> MonitorReport {
    let curve = state.curve();
    let frames = state.frames();
    let nodes = curve.nodes();
    let closed = curve.topology() == Topology::Closed;
    let mut b = Builder { checks: Vec::new() };

    let (max_u, at_u) = argmax(frames.iter().map(|f| f.u));
    b.upper(String::from("a"), CheckClass::Bound, max_u, ledger.r_bound, true, 0.0, Some(at_u));

    let (max_u_tilde, at_ut) = argmax(frames.iter().map(|f| f.u_tilde));
    let d = curve.right_x();
    let e = if curve.topology().left_end() == EndKind::Pole {
        curve.left_x()
    } else {
        f64::NAN
    };
    let extent = if closed { d - e } else { max_u_tilde };
    let curve_length = curve.length();
    let h = state.h();
    let max_abs_h = frames.iter().map(|f| f.mean_curvature.abs()).fold(0.0, f64::max);

    for ab in &ledger.alphas {
        let tag = alpha_tag(ab.alpha);
        b.upper(format!("b[{tag}]"), CheckClass::Bound, extent, ab.l, closed, 0.0, (!closed).then_some(at_ut));
        b.upper(format!("c[{tag}]"), CheckClass::Bound, curve_length, ab.c_star, false, 0.0, None);
        b.upper(format!("d_upper[{tag}]"), CheckClass::Bound, h, ab.c1, false, 0.0, None);
        b.lower(
            format!("d_lower[{tag}]"),
            CheckClass::Bound,
            h,
            0.0,
            false,
            H_LOWER_TOLERANCE * ab.c1,
            None,
        );

        let decomp = geometry::decompose(curve, frames, ab.alpha);
        let mut cap_vt = (f64::NEG_INFINITY, 0usize);
        for cap in &decomp.caps {
            let sign = if cap.side == Side::Left { -1.0 } else { 1.0 };
            for i in cap.nodes.clone() {
                let vt = sign * frames[i].v_tilde;
                if vt > cap_vt.0 {
                    cap_vt = (vt, i);
                }
            }
        }
        if cap_vt.0.is_finite() {
            b.upper(format!("e_cap_vtilde[{tag}]"), CheckClass::Bound, cap_vt.0, ab.alpha, false, 0.0, Some(cap_vt.1));
        }
        match cylinder_extremes(&decomp, frames) {
            Some((min_u, at_min, _)) => {
                let (max_v, at_v) = argmax(decomp.cylinder.clone().map(|i| {
                    let v = frames[i].v;
                    if v.is_finite() {
                        v
                    } else {
                        f64::INFINITY
                    }
                }));
                let at_v = decomp.cylinder.start + at_v;
                b.checks.push(CheckResult {
                    id: format!("e_v_finite[{tag}]"),
                    class: CheckClass::Bound,
                    passed: max_v.is_finite(),
                    measured: max_v,
                    bound: f64::INFINITY,
                    margin: if max_v.is_finite() { 1.0 } else { -1.0 },
                    location: Some(at_v),
                });
                b.upper(
                    format!("e_v_bound[{tag}]"),
                    CheckClass::Bound,
                    max_v,
                    ab.v_bound,
                    false,
                    V_TOLERANCE * ab.v_bound,
                    Some(at_v),
                );
                b.lower(format!("f[{tag}]"), CheckClass::Assumption, min_u, ab.c_alpha, true, 0.0, Some(at_min));
            }
            None => {
                // No cylindrical part: the assumption is vacuous.
                b.checks.push(CheckResult {
                    id: format!("f[{tag}]"),
                    class: CheckClass::Assumption,
                    passed: true,
                    measured: f64::NAN,
                    bound: ab.c_alpha,
                    margin: f64::NAN,
                    location: None,
                });
            }
        }
    }

    let omega = math::unit_ball_volume(curve.dim());
    let d_floor = ledger.volume / (omega * math::powi(ledger.r_bound, curve.dim()));
    let reach = if closed { d - e } else { d };
    b.lower(String::from("g"), CheckClass::Bound, reach, d_floor, false, 0.0, Some(nodes.len() - 1));

    let sqrt2 = geometry::decompose(curve, frames, math::sqrt(2.0));
    let mut h_cut = f64::INFINITY;
    let mut cut_at = None;
    let mut cut_x = [f64::NAN; 2];
    let mut vt_cap = f64::NEG_INFINITY;
    for cap in &sqrt2.caps {
        let slot = if cap.side == Side::Right { 0 } else { 1 };
        cut_x[slot] = cap.cut_x;
        let sign = if cap.side == Side::Left { -1.0 } else { 1.0 };
        for i in cap.nodes.clone() {
            vt_cap = vt_cap.max(sign * frames[i].v_tilde);
        }
        if let Some(cut) = cap.cut {
            let hs: Vec<f64> = [cut.outer, cut.inner].iter().map(|&i| frames[i].mean_curvature).collect();
            let value = hs[0] + cut.lambda * (hs[1] - hs[0]);
            if value < h_cut {
                h_cut = value;
                cut_at = Some(cut.outer);
            }
        }
    }
    if h_cut.is_finite() {
        b.lower(String::from("h"), CheckClass::Bound, h_cut, 0.0, false, H_CUT_TOLERANCE * max_abs_h, cut_at);
    } else {
        h_cut = f64::NAN;
    }
    let min_cyl_u_sqrt2 = cylinder_extremes(&sqrt2, frames).map_or(f64::NAN, |e| e.0);

    let (kp, at_kp) = max_kp_ratio(frames);
    b.checks.push(CheckResult {
        id: String::from("i"),
        class: CheckClass::Bound,
        passed: kp <= ledger.kp0 * (1.0 + KP_TOLERANCE),
        measured: kp,
        bound: ledger.kp0,
        margin: (ledger.kp0 - kp) / ledger.kp0,
        location: at_kp,
    });

    let (max_a2, _) = argmax(frames.iter().map(|f| f.a2));
    let grad_a = max_grad_a(curve, frames);
    b.checks.push(CheckResult {
        id: String::from("k"),
        class: CheckClass::Diagnostic,
        passed: true,
        measured: grad_a,
        bound: f64::INFINITY,
        margin: f64::NAN,
        location: None,
    });

    let measurements = Measurements {
        max_u,
        max_u_tilde,
        curve_length,
        d,
        e,
        max_kp_ratio: kp,
        max_a2,
        max_grad_a: grad_a,
        min_cyl_u_sqrt2,
        v_tilde_max_cap_sqrt2: if vt_cap.is_finite() { vt_cap } else { f64::NAN },
        h_at_sqrt2_cut: h_cut,
        cut_x_sqrt2: cut_x,
    };
    finish(state, b.checks, measurements)
}

fn finish(state: &FlowState, checks: Vec<CheckResult>, measurements: Measurements) -> MonitorReport {
    let worst_margin = checks
        .iter()
        .filter(|c| c.class != CheckClass::Diagnostic && c.margin.is_finite())
        .map(|c| c.margin)
        .fold(f64::INFINITY, f64::min);
    let assumption = checks
        .iter()
        .filter(|c| c.class == CheckClass::Assumption)
        .all(|c| c.passed);
    let bound_failed = checks.iter().any(|c| c.class == CheckClass::Bound && !c.passed);
    MonitorReport {
        t: state.t(),
        step: state.step_index(),
        checks,
        worst_margin,
        measurements,
        hard_fail: assumption && bound_failed,
    }
}

/// Stateful monitor: runs [`evaluate`] and tracks `max |A|²` over time.
#[derive(Debug, Clone)]
pub struct Monitor {
    ledger: BoundLedger,
    mode: FlowMode,
    history: VecDeque<(u64, f64)>,
    last: Option<MonitorReport>,
    first_failure: Option<MonitorReport>,
    halt_on_hard_fail: bool,
}

impl Monitor {
    pub fn new(ledger: BoundLedger, mode: FlowMode) -> Self {
        Self {
            ledger,
            mode,
            history: VecDeque::new(),
            last: None,
            first_failure: None,
            halt_on_hard_fail: false,
        }
    }

    /// Makes the monitor stop a run on its first hard failure.
    pub fn halting(mut self) -> Self {
        self.halt_on_hard_fail = true;
        self
    }

    pub fn ledger(&self) -> &BoundLedger {
        &self.ledger
    }

    pub fn last_report(&self) -> Option<&MonitorReport> {
        self.last.as_ref()
    }

    /// First report that failed any non-diagnostic check.
    pub fn first_failure(&self) -> Option<&MonitorReport> {
        self.first_failure.as_ref()
    }

    /// Evaluates all checks. In plain mean curvature flow the estimates do
    /// not apply, so reports never count as hard failures there.
    pub fn check(&mut self, state: &FlowState) -> MonitorReport {
        let mut report = evaluate(state, &self.ledger);
        let a2 = report.measurements.max_a2;
        let step = state.step_index();
        if state.t() >= self.ledger.t_burn {
            while let Some(&(s, _)) = self.history.front() {
                if s + A2_WINDOW < step {
                    self.history.pop_front();
                } else {
                    break;
                }
            }
            let floor = self.history.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
            let bound = if floor.is_finite() { 2.0 * floor } else { 2.0 * a2 };
            self.history.push_back((step, a2));
            report.checks.push(CheckResult {
                id: String::from("j"),
                class: CheckClass::Bound,
                passed: a2 <= bound,
                measured: a2,
                bound,
                margin: (bound - a2) / bound,
                location: None,
            });
            report = finish(state, report.checks, report.measurements);
        }
        if self.mode == FlowMode::PlainMcf {
            report.hard_fail = false;
        }
        let failed = report
            .checks
            .iter()
            .any(|c| c.class != CheckClass::Diagnostic && !c.passed);
        if failed && self.first_failure.is_none() {
            self.first_failure = Some(report.clone());
        }
        self.last = Some(report.clone());
        report
    }
}

impl crate::flow::Observer for Monitor {
    fn observe(&mut self, state: &FlowState) -> crate::flow::Control {
        let report = self.check(state);
        if report.hard_fail && self.halt_on_hard_fail {
            crate::flow::Control::Halt
        } else {
            crate::flow::Control::Continue
        }
    }
}
