//! Time stepping for `∂x/∂t = -(H - h)ν` and plain mean curvature flow.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::curve::{CurveError, Point, ProfileCurve};
use crate::geometry::{self, GeometryError, Parity, PointFrame};
use crate::math;
use crate::monitor::{pinch_guard, PinchStatus};

/// Relative volume tolerance of the Newton projection.
pub const PROJECTION_TOLERANCE: f64 = 1e-12;
/// Newton iterations allowed for the projection.
pub const PROJECTION_MAX_ITER: usize = 5;
/// Default pinch threshold as a fraction of the initial maximum radius.
pub const PINCH_FRACTION: f64 = 1e-3;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("pinch detected at node {node}: r = {r:e}")]
    Pinch { node: usize, r: f64 },
    #[error("volume projection did not converge: relative error {relative_error:e}")]
    ProjectionFailed { relative_error: f64 },
    #[error("invalid step policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("non-finite node position after step")]
    NonFinite,
    #[error(transparent)]
    Curve(#[from] CurveError),
}

impl From<GeometryError> for FlowError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Pinch { node, r } => FlowError::Pinch { node, r },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FlowMode {
    /// Normal speed `-(H - h)`.
    VolumePreserving,
    /// Normal speed `-H`.
    PlainMcf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StepPolicy {
    pub cfl_safety: f64,
    pub dt_max: f64,
    /// Resample every this many steps; 0 disables redistribution.
    pub redistribution_period: usize,
    pub volume_projection: bool,
    pub mode: FlowMode,
    /// Interior neck radius below which stepping stops. `None` means
    /// `1e-3` times the initial maximum radius.
    pub pinch_epsilon: Option<f64>,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            cfl_safety: 0.2,
            dt_max: 1e-2,
            redistribution_period: 10,
            volume_projection: true,
            mode: FlowMode::VolumePreserving,
            pinch_epsilon: None,
        }
    }
}

impl StepPolicy {
    pub fn check(&self) -> Result<(), FlowError> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(FlowError::InvalidPolicy("cfl_safety must lie in (0, 1]"));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(FlowError::InvalidPolicy("dt_max must be positive"));
        }
        if let Some(eps) = self.pinch_epsilon {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(FlowError::InvalidPolicy("pinch_epsilon must be non-negative"));
            }
        }
        Ok(())
    }
}

/// A curve together with cached geometry. The caches are recomputed on
/// every construction, so a `FlowState` is always self-consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    curve: ProfileCurve,
    frames: Vec<PointFrame>,
    t: f64,
    step_index: u64,
    area: f64,
    volume: f64,
    h: f64,
    h_flow: f64,
    target_volume: f64,
    r_scale: f64,
    redistributions: u64,
}

impl FlowState {
    /// Initial state at `t = 0`; the target volume is the current volume.
    pub fn new(curve: ProfileCurve) -> Result<Self, FlowError> {
        let r_scale = curve.nodes().iter().map(|p| p.r).fold(0.0, f64::max);
        let mut s = Self::assemble(curve, 0.0, 0, 0.0, r_scale, 0)?;
        s.target_volume = s.volume;
        Ok(s)
    }

    /// Overrides the volume the projection aims for.
    pub fn with_target_volume(mut self, target: f64) -> Self {
        self.target_volume = target;
        self
    }

    fn assemble(
        curve: ProfileCurve,
        t: f64,
        step_index: u64,
        target_volume: f64,
        r_scale: f64,
        redistributions: u64,
    ) -> Result<Self, FlowError> {
        let frames = geometry::frames(&curve)?;
        let area = geometry::surface_area(&curve);
        let volume = geometry::enclosed_volume(&curve);
        let h = geometry::mean_h(&curve, &frames);
        let h_flow = flow_average(&curve, &frames);
        Ok(Self {
            curve,
            frames,
            t,
            step_index,
            area,
            volume,
            h,
            h_flow,
            target_volume,
            r_scale,
            redistributions,
        })
    }

    pub fn curve(&self) -> &ProfileCurve {
        &self.curve
    }
    pub fn frames(&self) -> &[PointFrame] {
        &self.frames
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn step_index(&self) -> u64 {
        self.step_index
    }
    pub fn area(&self) -> f64 {
        self.area
    }
    pub fn volume(&self) -> f64 {
        self.volume
    }
    /// Area average of the mean curvature.
    pub fn h(&self) -> f64 {
        self.h
    }
    /// Average used in the velocity law (see [`flow_average`]).
    pub fn h_flow(&self) -> f64 {
        self.h_flow
    }
    pub fn target_volume(&self) -> f64 {
        self.target_volume
    }
    /// Maximum radius of the initial curve.
    pub fn r_scale(&self) -> f64 {
        self.r_scale
    }
    /// Number of resamplings applied so far.
    pub fn redistributions(&self) -> u64 {
        self.redistributions
    }
    pub fn pinch_epsilon(&self, policy: &StepPolicy) -> f64 {
        policy.pinch_epsilon.unwrap_or(PINCH_FRACTION * self.r_scale)
    }
}

/// Average of `H` weighted by `W_i = ⟨∂V/∂X_i, ν_i⟩`.
///
/// These are the trapezoidal area weights up to `O(Δs²)`, and with them the
/// semi-discrete velocity `-(H_i - h)ν_i` leaves the discrete volume
/// stationary exactly.
pub fn flow_average(curve: &ProfileCurve, frames: &[PointFrame]) -> f64 {
    let grad = geometry::volume_gradient(curve);
    let (mut num, mut den) = (0.0, 0.0);
    for (g, f) in grad.iter().zip(frames) {
        let w = g.dot(f.normal);
        num += w * f.mean_curvature;
        den += w;
    }
    num / den
}

fn velocity_with(frames: &[PointFrame], h: f64) -> Vec<f64> {
    frames.iter().map(|f| -(f.mean_curvature - h)).collect()
}

/// Normal speed per node: `-(H_i - h)` or `-H_i` in plain mode.
pub fn normal_velocity(state: &FlowState, mode: FlowMode) -> Vec<f64> {
    let h = match mode {
        FlowMode::VolumePreserving => state.h_flow,
        FlowMode::PlainMcf => 0.0,
    };
    velocity_with(&state.frames, h)
}

/// Parabolic step bound
/// `dt = min(dt_max, cfl_safety · Δs_min² / (2 + max|A|² · Δs_min²))`.
pub fn choose_dt(state: &FlowState, policy: &StepPolicy) -> f64 {
    let ds = geometry::min_spacing(&state.curve);
    let a2 = state
        .frames
        .iter()
        .map(|f| f.a2)
        .filter(|a| a.is_finite())
        .fold(0.0, f64::max);
    let ds2 = ds * ds;
    (policy.cfl_safety * ds2 / (2.0 + a2 * ds2)).min(policy.dt_max)
}

fn displaced(curve: &ProfileCurve, dirs: &[Point], speed: &[f64], dt: f64) -> Result<ProfileCurve, FlowError> {
    let mut out = curve.clone();
    for ((p, d), s) in out.nodes_mut().iter_mut().zip(dirs).zip(speed) {
        *p = *p + *d * (dt * s);
    }
    out.impose_endpoint_constraints();
    if out.nodes().iter().any(|p| !p.x.is_finite() || !p.r.is_finite()) {
        return Err(FlowError::NonFinite);
    }
    Ok(out)
}

fn normals(frames: &[PointFrame]) -> Vec<Point> {
    frames.iter().map(|f| f.normal).collect()
}

/// Uniform normal offset `ε` with `V(X + εν) = target`, by Newton.
fn project_volume(curve: &mut ProfileCurve, dirs: &[Point], target: f64) -> Result<(), FlowError> {
    let base = curve.clone();
    let offset = |eps: f64| {
        let mut c = base.clone();
        for (p, d) in c.nodes_mut().iter_mut().zip(dirs) {
            *p = *p + *d * eps;
        }
        c.impose_endpoint_constraints();
        c
    };
    let mut eps = (target - geometry::enclosed_volume(&base)) / geometry::surface_area(&base);
    let mut trial = offset(eps);
    for _ in 0..PROJECTION_MAX_ITER {
        let v = geometry::enclosed_volume(&trial);
        if (v - target).abs() <= PROJECTION_TOLERANCE * target.abs() {
            *curve = trial;
            return Ok(());
        }
        let slope: f64 = geometry::volume_gradient(&trial)
            .iter()
            .zip(dirs)
            .map(|(g, d)| g.dot(*d))
            .sum();
        eps += (target - v) / slope;
        trial = offset(eps);
    }
    let v = geometry::enclosed_volume(&trial);
    let relative_error = (v - target).abs() / target.abs();
    if relative_error <= PROJECTION_TOLERANCE {
        *curve = trial;
        Ok(())
    } else {
        Err(FlowError::ProjectionFailed { relative_error })
    }
}

fn check_pinch(curve: &ProfileCurve, epsilon: f64) -> Result<(), FlowError> {
    match pinch_guard(curve, epsilon) {
        PinchStatus::Ok => Ok(()),
        PinchStatus::Neck { node, r_min } => Err(FlowError::Pinch { node, r: r_min }),
    }
}

/// One explicit midpoint step of size `dt`.
///
/// On error the input state is untouched and nothing is returned.
pub fn step_with_dt(state: &FlowState, policy: &StepPolicy, dt: f64) -> Result<FlowState, FlowError> {
    policy.check()?;
    let eps = state.pinch_epsilon(policy);
    check_pinch(&state.curve, eps)?;
    let h_of = |c: &ProfileCurve, f: &[PointFrame]| match policy.mode {
        FlowMode::VolumePreserving => flow_average(c, f),
        FlowMode::PlainMcf => 0.0,
    };

    let v0 = velocity_with(&state.frames, h_of(&state.curve, &state.frames));
    let half = displaced(&state.curve, &normals(&state.frames), &v0, 0.5 * dt)?;
    let half_frames = geometry::frames(&half)?;
    let v_half = velocity_with(&half_frames, h_of(&half, &half_frames));
    let half_normals = normals(&half_frames);
    let mut next = displaced(&state.curve, &half_normals, &v_half, dt)?;

    let step_index = state.step_index + 1;
    let mut redistributions = state.redistributions;
    let period = policy.redistribution_period as u64;
    let mut project_dirs = half_normals;
    if period > 0 && step_index.is_multiple_of(period) {
        next = next.resample(next.len())?;
        redistributions += 1;
        project_dirs = normals(&geometry::frames(&next)?);
    }
    if policy.volume_projection && policy.mode == FlowMode::VolumePreserving {
        project_volume(&mut next, &project_dirs, state.target_volume)?;
    }
    check_pinch(&next, eps)?;
    FlowState::assemble(
        next,
        state.t + dt,
        step_index,
        state.target_volume,
        state.r_scale,
        redistributions,
    )
}

/// One step at the CFL-limited time step.
pub fn step(state: &FlowState, policy: &StepPolicy) -> Result<FlowState, FlowError> {
    step_with_dt(state, policy, choose_dt(state, policy))
}

/// Verdict of an observer after seeing a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    /// The flow reached its limit; stop with [`Termination::Converged`].
    Converged,
    /// Stop for an observer-specific reason (e.g. a failed bound).
    Halt,
}

pub trait Observer {
    fn observe(&mut self, state: &FlowState) -> Control;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    Horizon,
    Converged,
    Halted,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub termination: Termination,
    pub final_state: FlowState,
    pub observations: u64,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("step {step_index} at t = {t}: {error}")]
pub struct RunError {
    pub step_index: u64,
    pub t: f64,
    pub error: FlowError,
    /// Last accepted state before the failing step.
    pub last_state: Box<FlowState>,
}

fn notify(observers: &mut [&mut dyn Observer], state: &FlowState) -> Control {
    let mut verdict = Control::Continue;
    for o in observers.iter_mut() {
        match o.observe(state) {
            Control::Halt => verdict = Control::Halt,
            Control::Converged if verdict == Control::Continue => verdict = Control::Converged,
            _ => {}
        }
    }
    verdict
}

/// Steps until `horizon`, an observer stop, or an error. Observers see the
/// initial state, every `observe_every`-th step, and the final state.
pub fn run(
    initial: FlowState,
    policy: &StepPolicy,
    horizon: f64,
    observe_every: u64,
    observers: &mut [&mut dyn Observer],
) -> Result<RunSummary, RunError> {
    let fail = |state: &FlowState, error: FlowError| RunError {
        step_index: state.step_index,
        t: state.t,
        error,
        last_state: Box::new(state.clone()),
    };
    policy.check().map_err(|e| fail(&initial, e))?;
    let every = observe_every.max(1);
    let mut state = initial;
    let mut observations = 1;
    let finish = |termination, final_state, observations| RunSummary {
        termination,
        final_state,
        observations,
    };
    match notify(observers, &state) {
        Control::Continue => {}
        Control::Converged => return Ok(finish(Termination::Converged, state, observations)),
        Control::Halt => return Ok(finish(Termination::Halted, state, observations)),
    }
    let tiny = 1e-14 * horizon.max(1.0);
    loop {
        let remaining = horizon - state.t;
        if remaining <= tiny {
            return Ok(finish(Termination::Horizon, state, observations));
        }
        let dt = choose_dt(&state, policy).min(remaining);
        state = step_with_dt(&state, policy, dt).map_err(|e| fail(&state, e))?;
        let at_end = horizon - state.t <= tiny;
        if state.step_index.is_multiple_of(every) || at_end {
            observations += 1;
            match notify(observers, &state) {
                Control::Continue => {}
                Control::Converged => return Ok(finish(Termination::Converged, state, observations)),
                Control::Halt => return Ok(finish(Termination::Halted, state, observations)),
            }
        }
    }
}

/// The quantities of the evolution identities, in their usual numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Quantity {
    /// (i) `u`: right side `h/v - (n-1)/u`.
    U,
    /// (ii) `ũ`: `h/ṽ`.
    UTilde,
    /// (iii) `v`: `-|A|²v + (n-1)v/u² - 2|∇v|²/v`.
    V,
    /// (iv) `ṽ`: `-|A|²ṽ - 2|∇ṽ|²/ṽ`.
    VTilde,
    /// (v) `H`: `(H - h)|A|²`.
    H,
    /// (vi) `|A|²`: `-2|∇A|² + 2|A|⁴ - 2hC` with
    /// `|∇A|² = (k')² + (n-1)(p')² + (n-1)q²(k-p)²`.
    A2,
    /// (vi) with the full reduction `|∇A|² = (k')² + (n-1)(p')² + 2(n-1)q²(k-p)²`,
    /// which counts the mixed derivatives `∇_a h_{1a}` of both index orders.
    A2Full,
    /// (vii) `p`: `|A|²p + 2q²(k-p) - hp²`.
    P,
    /// (viii) `k`: `|A|²k - 2(n-1)q²(k-p) - hk²`.
    K,
}

impl Quantity {
    pub const ALL: [Quantity; 9] = [
        Quantity::U,
        Quantity::UTilde,
        Quantity::V,
        Quantity::VTilde,
        Quantity::H,
        Quantity::A2,
        Quantity::A2Full,
        Quantity::P,
        Quantity::K,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Quantity::U => "i:u",
            Quantity::UTilde => "ii:u_tilde",
            Quantity::V => "iii:v",
            Quantity::VTilde => "iv:v_tilde",
            Quantity::H => "v:H",
            Quantity::A2 => "vi:A2",
            Quantity::A2Full => "vi:A2_full",
            Quantity::P => "vii:p",
            Quantity::K => "viii:k",
        }
    }

    fn parity(self) -> Parity {
        match self {
            Quantity::UTilde => Parity::Odd,
            _ => Parity::Even,
        }
    }

    fn gradient_bounded(self) -> bool {
        matches!(self, Quantity::V | Quantity::VTilde)
    }

    pub fn field(self, frames: &[PointFrame]) -> Vec<f64> {
        frames
            .iter()
            .map(|f| match self {
                Quantity::U => f.u,
                Quantity::UTilde => f.u_tilde,
                Quantity::V => f.v,
                Quantity::VTilde => f.v_tilde,
                Quantity::H => f.mean_curvature,
                Quantity::A2 | Quantity::A2Full => f.a2,
                Quantity::P => f.p,
                Quantity::K => f.k,
            })
            .collect()
    }
}

/// Time discretisation of the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualScheme {
    /// Spatial terms averaged over both states (second order in `dt`).
    #[default]
    Trapezoidal,
    /// Spatial terms from the earlier state only (first order in `dt`).
    LeftPoint,
}

/// Nodes closer to the axis than this fraction of the initial maximum radius
/// are left out of the residual domain.
pub const AXIS_MARGIN: f64 = 0.1;

/// Largest `|v|`, `|ṽ|` admitted into the residual domain.
pub const GRADIENT_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub quantity: Quantity,
    /// Residual per node; `NaN` outside the checked domain.
    pub per_node: Vec<f64>,
    pub max: f64,
    /// Root mean square over the checked domain.
    pub l2: f64,
    pub domain_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ResidualError {
    #[error("redistribution happened between the two states")]
    RedistributionActive,
    #[error("states differ in node count or topology")]
    Mismatch,
    #[error("states are not ordered in time")]
    NonPositiveDt,
}

/// Right side of the evolution identity for `quantity` on one state.
pub fn evolution_rhs(quantity: Quantity, curve: &ProfileCurve, frames: &[PointFrame], h: f64) -> Vec<f64> {
    let m = (curve.dim() - 1) as f64;
    let field = quantity.field(frames);
    let deriv = match quantity {
        Quantity::V | Quantity::VTilde => geometry::arc_derivative(curve, &field, Parity::Even),
        _ => Vec::new(),
    };
    let (dk, dp) = match quantity {
        Quantity::A2 | Quantity::A2Full => {
            let k: Vec<f64> = frames.iter().map(|f| f.k).collect();
            let p: Vec<f64> = frames.iter().map(|f| f.p).collect();
            (
                geometry::arc_derivative(curve, &k, Parity::Even),
                geometry::arc_derivative(curve, &p, Parity::Even),
            )
        }
        _ => (Vec::new(), Vec::new()),
    };
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let skew = f.q * f.q * (f.k - f.p);
            match quantity {
                Quantity::U => h / f.v - m / f.u,
                Quantity::UTilde => h / f.v_tilde,
                Quantity::V => -f.a2 * f.v + m * f.v / (f.u * f.u) - 2.0 * deriv[i] * deriv[i] / f.v,
                Quantity::VTilde => -f.a2 * f.v_tilde - 2.0 * deriv[i] * deriv[i] / f.v_tilde,
                Quantity::H => (f.mean_curvature - h) * f.a2,
                Quantity::A2 | Quantity::A2Full => {
                    let c = if quantity == Quantity::A2 { 1.0 } else { 2.0 };
                    let grad2 = dk[i] * dk[i] + m * dp[i] * dp[i] + c * m * skew * (f.k - f.p);
                    -2.0 * grad2 + 2.0 * f.a2 * f.a2 - 2.0 * h * f.c3
                }
                Quantity::P => f.a2 * f.p + 2.0 * skew - h * f.p * f.p,
                Quantity::K => f.a2 * f.k - 2.0 * m * skew - h * f.k * f.k,
            }
        })
        .collect()
}

/// `(f_b - f_a)/dt - Δf - RHS(f)` between two states of the same run.
///
/// The states may be several steps apart as long as no resampling happened
/// in between, so that nodes follow the normal motion. The three nodes at
/// each end and every node closer to the axis than [`AXIS_MARGIN`] times the
/// initial maximum radius are excluded
/// (near the axis `q²(k - p)` divides an `O(Δs²)` error by `r²`). For `v`
/// and `ṽ` so is every node where the value or a neighbour's exceeds
/// [`GRADIENT_CAP`] in magnitude.
pub fn evolution_residual(
    before: &FlowState,
    after: &FlowState,
    quantity: Quantity,
    scheme: ResidualScheme,
) -> Result<ResidualReport, ResidualError> {
    if before.redistributions != after.redistributions {
        return Err(ResidualError::RedistributionActive);
    }
    if before.curve.len() != after.curve.len() || before.curve.topology() != after.curve.topology() {
        return Err(ResidualError::Mismatch);
    }
    let dt = after.t - before.t;
    if !(dt > 0.0) {
        return Err(ResidualError::NonPositiveDt);
    }
    let parity = quantity.parity();
    let eval = |s: &FlowState| {
        let f = quantity.field(&s.frames);
        let lap = geometry::laplace_beltrami(&s.curve, &f, parity);
        let rhs = evolution_rhs(quantity, &s.curve, &s.frames, s.h_flow);
        (f, lap, rhs)
    };
    let (fa, la, ra) = eval(before);
    let (fb, lb, rb) = eval(after);
    let len = fa.len();
    let bounded = |i: usize| {
        [&fa, &fb]
            .iter()
            .all(|f| (i - 1..=i + 1).all(|j| f[j].abs() <= GRADIENT_CAP))
    };
    let mut per_node = alloc::vec![f64::NAN; len];
    let (mut max, mut sum2, mut count) = (0.0f64, 0.0, 0usize);
    let axis = AXIS_MARGIN * before.r_scale;
    for i in 3..len.saturating_sub(3) {
        if before.curve.nodes()[i].r < axis || quantity.gradient_bounded() && !bounded(i) {
            continue;
        }
        let (lap, rhs) = match scheme {
            ResidualScheme::Trapezoidal => (0.5 * (la[i] + lb[i]), 0.5 * (ra[i] + rb[i])),
            ResidualScheme::LeftPoint => (la[i], ra[i]),
        };
        let res = (fb[i] - fa[i]) / dt - lap - rhs;
        per_node[i] = res;
        max = max.max(res.abs());
        sum2 += res * res;
        count += 1;
    }
    let l2 = if count > 0 { math::sqrt(sum2 / count as f64) } else { 0.0 };
    Ok(ResidualReport {
        quantity,
        per_node,
        max,
        l2,
        domain_nodes: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{build_profile, InitialShapeSpec, ShapeKind, Topology};
    use crate::math::PI;
    use approx::assert_abs_diff_eq;

    fn state(spec: InitialShapeSpec) -> FlowState {
        FlowState::new(build_profile(&spec).unwrap()).unwrap()
    }

    fn perturbed(n: usize) -> FlowState {
        state(InitialShapeSpec::new(
            ShapeKind::PerturbedHemisphere {
                radius: 1.0,
                amplitude: 0.1,
                mode_count: 2,
            },
            Topology::FreeBoundary,
            2,
            n,
        ))
    }

    #[test]
    fn spheres_do_not_move() {
        let s = state(InitialShapeSpec::sphere(1.0, 0.0, 400));
        let v = normal_velocity(&s, FlowMode::VolumePreserving);
        assert!(v.iter().all(|x| x.abs() < 1e-8));
        let s = state(InitialShapeSpec::hemisphere(1.0, 400));
        let v = normal_velocity(&s, FlowMode::VolumePreserving);
        assert!(v.iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn cylinder_with_cap_velocity_signs() {
        let s = state(InitialShapeSpec::new(
            ShapeKind::CosineBumpCylinder {
                base_radius: 1.0,
                length: 2.0,
                amplitude: 0.0,
                mode_count: 1,
            },
            Topology::FreeBoundary,
            2,
            400,
        ));
        assert!(s.h() > 1.0 && s.h() < 2.0);
        let v = normal_velocity(&s, FlowMode::VolumePreserving);
        let cyl = s.curve().nodes().iter().position(|p| p.x > 1.0).unwrap();
        assert!(v[cyl] > 0.0);
        assert!(v[s.curve().len() - 5] < 0.0);
    }

    #[test]
    fn dt_formula_and_scaling() {
        let policy = StepPolicy {
            dt_max: 1.0,
            ..StepPolicy::default()
        };
        let s = state(InitialShapeSpec::hemisphere(1.0, 200));
        let ds = 0.5 * PI / 199.0;
        // chords are slightly shorter than arcs; |A|² = 2 on the unit sphere
        let chord = 2.0 * (0.5 * ds).sin();
        let expected = 0.2 * chord * chord / (2.0 + 2.0 * chord * chord);
        assert_abs_diff_eq!(choose_dt(&s, &policy), expected, epsilon = 1e-12 * expected);
        let s2 = state(InitialShapeSpec::hemisphere(1.0, 399));
        let ratio = choose_dt(&s, &policy) / choose_dt(&s2, &policy);
        assert!((3.8..=4.2).contains(&ratio), "ratio {ratio}");
        let capped = StepPolicy {
            dt_max: 1e-9,
            ..policy
        };
        assert_eq!(choose_dt(&s, &capped), 1e-9);
    }

    #[test]
    fn one_step_reduces_area_and_keeps_volume() {
        let s = perturbed(200);
        let next = step(&s, &StepPolicy::default()).unwrap();
        assert!(next.area() < s.area());
        assert!((next.volume() - s.target_volume()).abs() <= 1e-12 * s.target_volume());
        assert_eq!(next.step_index(), 1);
    }

    #[test]
    fn sphere_is_a_fixed_point_over_many_steps() {
        let s0 = state(InitialShapeSpec::sphere(1.0, 0.0, 200));
        let mut s = s0.clone();
        for _ in 0..100 {
            s = step(&s, &StepPolicy::default()).unwrap();
        }
        for p in s.curve().nodes() {
            assert!((p.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn translation_commutes_with_stepping() {
        let a = state(InitialShapeSpec::new(
            ShapeKind::PerturbedSphere {
                radius: 1.0,
                center_x: 0.0,
                amplitude: 0.1,
                mode_count: 2,
            },
            Topology::Closed,
            2,
            100,
        ));
        let shift = 0.75;
        let moved: Vec<Point> = a.curve().nodes().iter().map(|p| Point::new(p.x + shift, p.r)).collect();
        let b = FlowState::new(ProfileCurve::from_nodes(moved, Topology::Closed, 2)).unwrap();
        let policy = StepPolicy::default();
        let (mut sa, mut sb) = (a, b);
        for _ in 0..20 {
            let dt = choose_dt(&sa, &policy);
            sa = step_with_dt(&sa, &policy, dt).unwrap();
            sb = step_with_dt(&sb, &policy, dt).unwrap();
        }
        for (p, q) in sa.curve().nodes().iter().zip(sb.curve().nodes()) {
            assert_abs_diff_eq!(p.x + shift, q.x, epsilon = 1e-12);
            assert_abs_diff_eq!(p.r, q.r, epsilon = 1e-12);
        }
    }

    #[test]
    fn pinch_leaves_state_untouched() {
        let s = state(InitialShapeSpec::new(
            ShapeKind::Dumbbell {
                bulb_radius: 1.0,
                neck_radius: 0.05,
                length: 6.0,
            },
            Topology::Closed,
            2,
            200,
        ));
        let policy = StepPolicy {
            pinch_epsilon: Some(0.1),
            mode: FlowMode::PlainMcf,
            ..StepPolicy::default()
        };
        let before = s.clone();
        let err = step(&s, &policy).unwrap_err();
        assert!(matches!(err, FlowError::Pinch { node, .. } if (90..110).contains(&node)));
        assert_eq!(s, before);
    }

    #[test]
    fn run_on_hemisphere_converges_immediately() {
        struct Always;
        impl Observer for Always {
            fn observe(&mut self, _: &FlowState) -> Control {
                Control::Converged
            }
        }
        let s = state(InitialShapeSpec::hemisphere(1.0, 64));
        let summary = run(s, &StepPolicy::default(), 1.0, 10, &mut [&mut Always]).unwrap();
        assert_eq!(summary.termination, Termination::Converged);
        assert_eq!(summary.final_state.t(), 0.0);
    }

    #[test]
    fn residual_refuses_across_redistribution() {
        let s = perturbed(64);
        let policy = StepPolicy {
            redistribution_period: 1,
            ..StepPolicy::default()
        };
        let next = step(&s, &policy).unwrap();
        assert_eq!(
            evolution_residual(&s, &next, Quantity::H, ResidualScheme::Trapezoidal),
            Err(ResidualError::RedistributionActive)
        );
    }

    #[test]
    fn sphere_h_residual_vanishes() {
        let s = state(InitialShapeSpec::sphere(1.0, 0.0, 400));
        let policy = StepPolicy {
            redistribution_period: 0,
            ..StepPolicy::default()
        };
        let next = step(&s, &policy).unwrap();
        let r = evolution_residual(&s, &next, Quantity::H, ResidualScheme::Trapezoidal).unwrap();
        assert!(r.max < 1e-6, "max {}", r.max);
    }

    #[test]
    fn rhs_relations() {
        // (v) = (viii) + (n-1)(vii), pointwise and exactly
        let s = perturbed(100);
        let c = s.curve();
        let h = s.h_flow();
        let rh = evolution_rhs(Quantity::H, c, s.frames(), h);
        let rk = evolution_rhs(Quantity::K, c, s.frames(), h);
        let rp = evolution_rhs(Quantity::P, c, s.frames(), h);
        for i in 1..99 {
            assert_abs_diff_eq!(rh[i], rk[i] + rp[i], epsilon = 1e-9 * (1.0 + rh[i].abs()));
        }
    }
}
