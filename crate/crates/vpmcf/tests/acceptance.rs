//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use vpmcf::config::RunConfig;
use vpmcf_core::curve::{build_profile, InitialShapeSpec, ShapeKind, Topology};
use vpmcf_core::flow::{self, choose_dt, evolution_residual, step, step_with_dt, Control, Observer, Quantity, ResidualScheme, StepPolicy};
use vpmcf_core::math::unit_ball_volume;
use vpmcf_core::monitor::ledger_from_initial;
use vpmcf_core::oracle::{reference_surface, ReferenceKind};
use vpmcf_core::{geometry, FlowState};

const GEOMETRY_REL_TOL: f64 = 1e-4;
const SECOND_ORDER_RATIO: (f64, f64) = (3.0, 5.0);
const IDENTITY_REL_TOL: f64 = 1e-8;
const FIXED_POINT_DRIFT: f64 = 1e-6;
const FIXED_POINT_STEPS: usize = 1000;
const VOLUME_REL_TOL: f64 = 1e-10;
const DRIFT_MIN_ORDER: f64 = 1.8;
const AREA_SLACK: f64 = 1e-12;
const CMC_TOL: f64 = 1e-4;
const SHAPE_TOL: f64 = 1e-3;
const RADIUS_REL_TOL: f64 = 1e-10;
const CONVERGE_BEFORE: f64 = 2.0;
const KP_SLACK: f64 = 1e-3;
const H_LOWER_SLACK: f64 = 1e-8;
const RESIDUAL_MIN_ORDER: f64 = 0.9;
const RESIDUAL_NODES: [usize; 3] = [100, 200, 400];

struct Verdict {
    id: u8,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn verdict(id: u8, title: &'static str, passed: bool, detail: String) -> Verdict {
    Verdict { id, title, passed, detail }
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn state(spec: InitialShapeSpec) -> FlowState {
    FlowState::new(build_profile(&spec).expect("profile")).expect("state")
}

fn perturbed_hemisphere(nodes: usize) -> InitialShapeSpec {
    InitialShapeSpec::new(
        ShapeKind::PerturbedHemisphere {
            radius: 1.0,
            amplitude: 0.1,
            mode_count: 2,
        },
        Topology::FreeBoundary,
        2,
        nodes,
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

struct CliRun {
    code: i32,
    dir: tempfile::TempDir,
    elapsed: Duration,
}

impl CliRun {
    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn series(&self) -> Series {
        Series::read(&self.file("series.csv"))
    }

    fn monitor(&self) -> Vec<serde_json::Value> {
        std::fs::read_to_string(self.file("monitor.jsonl"))
            .unwrap_or_default()
            .lines()
            .map(|l| serde_json::from_str(l).expect("monitor line"))
            .collect()
    }

    fn json(&self, name: &str) -> serde_json::Value {
        std::fs::read_to_string(self.file(name))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or(serde_json::Value::Null)
    }
}

fn run_cli(name: &str) -> CliRun {
    let dir = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_vpmcf"))
        .args(["run", "--config"])
        .arg(scenario(name))
        .env("VPMCF_OUTPUT_DIR", dir.path())
        .output()
        .expect("spawn vpmcf");
    CliRun {
        code: status.status.code().unwrap_or(-1),
        dir,
        elapsed: start.elapsed(),
    }
}

struct Series {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Series {
    fn read(path: &Path) -> Self {
        let mut r = csv::Reader::from_path(path).expect("series.csv");
        let header = r.headers().expect("header").iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.expect("row").iter().map(String::from).collect())
            .collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> Vec<f64> {
        let j = self.header.iter().position(|h| h == name).expect("column");
        self.rows
            .iter()
            .map(|r| match r[j].as_str() {
                "true" => 1.0,
                "false" => 0.0,
                s => s.parse().unwrap_or(f64::NAN),
            })
            .collect()
    }
}

fn c1_geometry() -> Verdict {
    let start = Instant::now();
    let shapes = [
        ("sphere", ReferenceKind::Sphere { radius: 1.0 }),
        ("hemisphere", ReferenceKind::Hemisphere { radius: 1.0 }),
        (
            "cylinder",
            ReferenceKind::CylinderSegment {
                radius: 1.0,
                length: 2.0,
            },
        ),
    ];
    let errors = |kind: ReferenceKind, nodes: usize| {
        let (curve, rec) = reference_surface(kind, 2, nodes).expect("reference");
        let frames = geometry::frames(&curve).expect("frames");
        let mut pointwise = 0.0f64;
        for (f, r) in frames.iter().zip(&rec.frames) {
            pointwise = pointwise
                .max(rel(f.k, r.k))
                .max(rel(f.p, r.p))
                .max(rel(f.mean_curvature, r.mean_curvature));
        }
        let area = rel(geometry::surface_area(&curve), rec.area);
        let volume = rel(geometry::enclosed_volume(&curve), rec.volume);
        (area, volume, pointwise)
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, kind) in shapes {
        let (a1, v1, p1) = errors(kind, 400);
        let (a2, v2, _) = errors(kind, 800);
        ok &= a1 <= GEOMETRY_REL_TOL && v1 <= GEOMETRY_REL_TOL && p1 <= GEOMETRY_REL_TOL;
        let mut ratio = |e1: f64, e2: f64, what: &str| {
            if e1 <= 1e-13 {
                notes.push(format!("{name} {what} exact"));
            } else {
                let r = e1 / e2;
                ok &= (SECOND_ORDER_RATIO.0..=SECOND_ORDER_RATIO.1).contains(&r);
                notes.push(format!("{name} {what} err {e1:.1e} ratio {r:.2}"));
            }
        };
        ratio(a1, a2, "area");
        ratio(v1, v2, "volume");
        notes.push(format!("{name} k,p,H err {p1:.1e}"));
    }
    // off a circle the curvature carries the O(Δs²) error: contact node of
    // the P4-perturbed hemisphere against the polar-graph curvature formula
    let rho = 1.0 + 0.1 * 3.0 / 8.0;
    let rho_pp = 0.1 * (-60.0 / 8.0);
    let k_exact = (rho - rho_pp) / (rho * rho);
    let k_err = |nodes| (state(perturbed_hemisphere(nodes)).frames()[0].k - k_exact).abs() / k_exact;
    let (e1, e2) = (k_err(400), k_err(800));
    let r = e1 / e2;
    ok &= e1 <= GEOMETRY_REL_TOL && (SECOND_ORDER_RATIO.0..=SECOND_ORDER_RATIO.1).contains(&r);
    notes.push(format!("perturbed k err {e1:.1e} ratio {r:.2}"));
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    verdict(1, "geometry kernel oracle equivalence", ok, format!("{}; {elapsed:.2?}", notes.join("; ")))
}

fn c2_identities() -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut ok = true;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("scenarios dir")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    for path in &files {
        let cfg = RunConfig::load(path, &[]).expect("scenario config");
        let s = state(cfg.shape());
        let m = (cfg.scenario.n - 1) as f64;
        for (i, f) in s.frames().iter().enumerate() {
            if s.curve().is_pole(i) {
                continue;
            }
            let pq = f.p * f.p + f.q * f.q;
            let inv_u2 = 1.0 / (f.u * f.u);
            let e1 = (pq - inv_u2).abs() / inv_u2;
            let e2 = (f.mean_curvature - (f.k + m * f.p)).abs() / f.mean_curvature.abs().max(1.0);
            let e3 = (f.a2 - (f.k * f.k + m * f.p * f.p)).abs() / f.a2.max(1.0);
            worst = worst.max(e1).max(e2).max(e3);
            ok &= e1 <= IDENTITY_REL_TOL && e2 <= IDENTITY_REL_TOL && e3 <= IDENTITY_REL_TOL;
            count += 1;
        }
    }
    ok &= files.len() >= 5;
    verdict(
        2,
        "pointwise identities on scenario frames",
        ok,
        format!("{} scenarios, {count} nodes, worst rel {worst:.1e}", files.len()),
    )
}

fn c3_fixed_points() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    let policy = StepPolicy::default();
    for (name, spec) in [
        ("sphere", InitialShapeSpec::sphere(1.0, 0.0, 400)),
        ("hemisphere", InitialShapeSpec::hemisphere(1.0, 400)),
    ] {
        let start = Instant::now();
        let mut s = state(spec);
        let (mut drift, mut h_dev) = (0.0f64, (s.h() - 2.0).abs());
        for _ in 0..FIXED_POINT_STEPS {
            s = step(&s, &policy).expect("step");
            for p in s.curve().nodes() {
                drift = drift.max((p.x.hypot(p.r) - 1.0).abs());
            }
            h_dev = h_dev.max((s.h() - 2.0).abs());
        }
        let elapsed = start.elapsed();
        ok &= drift <= FIXED_POINT_DRIFT && h_dev <= FIXED_POINT_DRIFT && elapsed < Duration::from_secs(10);
        notes.push(format!("{name} drift {drift:.1e} |h-2| {h_dev:.1e} {elapsed:.2?}"));
    }
    verdict(3, "round fixed points", ok, notes.join("; "))
}

struct Trace {
    rows: Vec<(f64, f64, f64)>,
}

impl Observer for Trace {
    fn observe(&mut self, s: &FlowState) -> Control {
        self.rows.push((s.t(), s.volume(), s.area()));
        Control::Continue
    }
}

/// Runs the perturbed hemisphere to `t = 0.5` with projection on, shared by
/// criteria 4 and 5.
fn volume_run() -> Trace {
    let cfg = RunConfig::load(&scenario("perturbed_hemisphere"), &[]).expect("config");
    let mut trace = Trace { rows: Vec::new() };
    flow::run(state(cfg.shape()), &cfg.policy, 0.5, cfg.observe_every, &mut [&mut trace]).expect("run");
    trace
}

fn c4_volume(trace: &Trace) -> Verdict {
    let v0 = trace.rows[0].1;
    let worst = trace.rows.iter().map(|r| (r.1 - v0).abs() / v0).fold(0.0, f64::max);
    let reached = trace.rows.last().map_or(0.0, |r| r.0);

    let policy = StepPolicy {
        redistribution_period: 0,
        volume_projection: false,
        ..StepPolicy::default()
    };
    let s0 = state(perturbed_hemisphere(50));
    let dt0 = choose_dt(&s0, &policy);
    let drift: Vec<f64> = [1.0, 0.5, 0.25]
        .iter()
        .map(|f| {
            let s = step_with_dt(&s0, &policy, dt0 * f).expect("step");
            (s.volume() - s0.volume()).abs() / s0.volume()
        })
        .collect();
    let orders = [(drift[0] / drift[1]).log2(), (drift[1] / drift[2]).log2()];
    let ok = worst <= VOLUME_REL_TOL
        && (reached - 0.5).abs() < 1e-12
        && orders.iter().all(|o| *o >= DRIFT_MIN_ORDER);
    verdict(
        4,
        "volume conservation",
        ok,
        format!(
            "{} observations to t={reached}, max rel drift {worst:.1e}; unprojected drift {:.1e} orders {:.2} {:.2}",
            trace.rows.len(),
            drift[0],
            orders[0],
            orders[1]
        ),
    )
}

fn c5_area(trace: &Trace) -> Verdict {
    let a0 = trace.rows[0].2;
    let worst = trace.rows.windows(2).map(|w| w[1].2 - w[0].2).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        5,
        "area monotonicity",
        worst <= AREA_SLACK * a0,
        format!("largest increase {worst:.1e} vs slack {:.1e}", AREA_SLACK * a0),
    )
}

fn convergence_verdict(id: u8, title: &'static str, run: &CliRun, closed: bool) -> Verdict {
    let series = run.series();
    let volume = series.col("volume");
    let w = unit_ball_volume(3);
    let radius = |v: f64| if closed { (v / w).cbrt() } else { (2.0 * v / w).cbrt() };
    let rho0 = radius(volume[0]);
    let held = volume.iter().map(|v| (radius(*v) - rho0).abs() / rho0).fold(0.0, f64::max);
    let t = series.col("t");
    let sup = series.col("sup_H_minus_h");
    let dev = series.col("shape_dev");
    let conv = series.col("converged");
    let last = t.len() - 1;
    let summary = run.json("summary.json");
    let fitted = summary["convergence"]["fitted_radius"].as_f64().unwrap_or(f64::NAN);
    let ok = run.code == 0
        && conv[last] == 1.0
        && t[last] < CONVERGE_BEFORE
        && sup[last] <= CMC_TOL
        && dev[last] <= SHAPE_TOL * rho0
        && held <= RADIUS_REL_TOL
        && (fitted - radius(volume[last])).abs() <= RADIUS_REL_TOL * rho0
        && run.elapsed < Duration::from_secs(60);
    verdict(
        id,
        title,
        ok,
        format!(
            "exit {} converged at t={:.4} sup|H-h| {:.2e} shape_dev {:.2e} radius {rho0:.10} held {held:.1e}; {:.1?}",
            run.code, t[last], sup[last], dev[last], run.elapsed
        ),
    )
}

const LEDGER_CHECKS: [&str; 8] = ["a", "b", "c", "d", "f", "g", "h", "i"];

fn ledger_failures(monitor: &[serde_json::Value]) -> Vec<String> {
    let mut out = Vec::new();
    for report in monitor {
        for c in report["checks"].as_array().into_iter().flatten() {
            let id = c["id"].as_str().unwrap_or("");
            let family = id.split(['_', '[']).next().unwrap_or("");
            if LEDGER_CHECKS.contains(&family) && c["passed"] != true {
                out.push(format!("{id}@t={}", report["t"]));
            }
        }
    }
    out
}

fn c8_ledger(runs: &[(&str, &CliRun)]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, run) in runs {
        let monitor = run.monitor();
        let failures = ledger_failures(&monitor);
        let series = run.series();
        let kp = series.col("max_kp_ratio");
        let bound = kp[0].max(1.0) * (1.0 + KP_SLACK);
        let mut running = f64::NEG_INFINITY;
        let mut kp_ok = true;
        for v in &kp {
            running = running.max(*v);
            kp_ok &= running <= bound;
        }
        let ledger = &run.json("summary.json")["ledger"];
        let c1 = ledger["alphas"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|a| a["c1"].as_f64())
            .fold(f64::INFINITY, f64::min);
        let r_bound = ledger["r_bound"].as_f64().unwrap_or(f64::NAN);
        let h_ok = series.col("h").iter().all(|h| *h >= -H_LOWER_SLACK * c1 && *h <= c1);
        let u_ok = series.col("max_u").iter().all(|u| *u < r_bound);
        ok &= failures.is_empty() && kp_ok && h_ok && u_ok && !monitor.is_empty();
        notes.push(format!(
            "{name}: {} reports, {} failures{} running k/p {running:.4} <= {bound:.4}, h in [-1e-8 c1, c1={c1:.3}], max u < R={r_bound:.4}",
            monitor.len(),
            failures.len(),
            failures.first().map_or(String::new(), |f| format!(" (first {f})")),
        ));
    }
    let unit = state(InitialShapeSpec::hemisphere(1.0, 400));
    let r = ledger_from_initial(&unit, &[], &[std::f64::consts::SQRT_2], 0.0)
        .map(|l| l.r_bound)
        .unwrap_or(f64::NAN);
    ok &= (r - std::f64::consts::SQRT_2).abs() <= GEOMETRY_REL_TOL;
    notes.push(format!("unit hemisphere R = {r:.6}"));
    verdict(8, "bound ledger", ok, notes.join("; "))
}

fn c9_sign(runs: &[(&str, &CliRun)]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, run) in runs {
        let monitor = run.monitor();
        let mut min_cut = f64::INFINITY;
        let mut checked = 0;
        for report in &monitor {
            if let Some(c) = report["checks"].as_array().into_iter().flatten().find(|c| c["id"] == "h") {
                checked += 1;
                ok &= c["passed"] == true;
                min_cut = min_cut.min(c["measured"].as_f64().unwrap_or(f64::NEG_INFINITY));
            }
        }
        ok &= checked == monitor.len() && checked > 0;
        notes.push(format!("{name}: {checked}/{} cuts, min H at cut {min_cut:.4}", monitor.len()));
    }
    verdict(9, "sign of H at the sqrt2 cut", ok, notes.join("; "))
}

fn c10_residuals() -> Verdict {
    let start = Instant::now();
    let policy = StepPolicy {
        redistribution_period: 0,
        volume_projection: false,
        ..StepPolicy::default()
    };
    let mut table: Vec<(Quantity, Vec<f64>)> = Quantity::ALL.iter().map(|q| (*q, Vec::new())).collect();
    for nodes in RESIDUAL_NODES {
        let s0 = state(perturbed_hemisphere(nodes));
        let s1 = step_with_dt(&s0, &policy, choose_dt(&s0, &policy)).expect("step");
        for (q, maxes) in table.iter_mut() {
            maxes.push(evolution_residual(&s0, &s1, *q, ResidualScheme::Trapezoidal).expect("residual").max);
        }
    }
    let required = [Quantity::U, Quantity::UTilde, Quantity::VTilde, Quantity::H, Quantity::P, Quantity::K];
    let mut ok = true;
    let mut notes = Vec::new();
    for (q, maxes) in &table {
        let order = maxes.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);
        let converging = order >= RESIDUAL_MIN_ORDER;
        if required.contains(q) {
            ok &= converging;
        }
        let tag = match (required.contains(q), converging) {
            (true, _) => "",
            (false, true) => " [reported]",
            (false, false) => " [reported, NON-CONVERGING]",
        };
        notes.push(format!("{} {:.1e}->{:.1e} order {order:.2}{tag}", q.label(), maxes[0], maxes[maxes.len() - 1]));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    verdict(10, "evolution residuals", ok, format!("{}; {elapsed:.2?}", notes.join("; ")))
}

fn c11_pinch(mcf: &CliRun, vp: &CliRun) -> Verdict {
    let cfg = RunConfig::load(&scenario("dumbbell_mcf"), &[]).expect("config");
    let s0 = state(cfg.shape());
    let eps = s0.pinch_epsilon(&cfg.policy);
    let last = s0.curve().len() - 1;
    let neck = |run: &CliRun| {
        let d = run.json("diagnostic.json");
        let node = d["neck_node"].as_u64().map(|n| n as usize);
        let r = d["neck_r"].as_f64().unwrap_or(f64::NAN);
        let t = d["last_state"]["t"].as_f64().unwrap_or(f64::NAN);
        (node, r, t)
    };
    let stopped = |run: &CliRun, horizon: f64| {
        let (node, r, t) = neck(run);
        node.is_some_and(|n| n > 0 && n < last) && r < eps && t < horizon
    };
    let (node, r, t) = neck(mcf);
    let mcf_ok = mcf.code == 2 && stopped(mcf, cfg.horizon);
    let vp_horizon = RunConfig::load(&scenario("dumbbell_vp"), &[]).expect("config").horizon;
    let vp_ok = match vp.code {
        0 => true,
        2 => stopped(vp, vp_horizon),
        _ => false,
    };
    let (vn, vr, vt) = neck(vp);
    verdict(
        11,
        "pinch detection",
        mcf_ok && vp_ok,
        format!(
            "plain: exit {} neck node {node:?} r {r:.2e} < eps {eps:.2e} at t={t:.5}; volume preserving: exit {} neck {vn:?} r {vr:.2e} t={vt:.5}",
            mcf.code, vp.code
        ),
    )
}

fn c12_determinism(a: &CliRun, b: &CliRun) -> Verdict {
    let x = std::fs::read(a.file("series.csv")).unwrap_or_default();
    let y = std::fs::read(b.file("series.csv")).unwrap_or_default();
    verdict(
        12,
        "determinism",
        !x.is_empty() && x == y,
        format!("{} and {} bytes, identical = {}", x.len(), y.len(), x == y),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let start = Instant::now();
    let mut results = vec![c1_geometry(), c2_identities(), c3_fixed_points()];
    let trace = volume_run();
    results.push(c4_volume(&trace));
    results.push(c5_area(&trace));

    let hemi = run_cli("perturbed_hemisphere");
    let sphere = run_cli("perturbed_sphere");
    results.push(convergence_verdict(6, "hemisphere convergence", &hemi, false));
    results.push(convergence_verdict(7, "sphere convergence", &sphere, true));
    let runs = [("hemisphere", &hemi), ("sphere", &sphere)];
    results.push(c8_ledger(&runs));
    results.push(c9_sign(&runs));
    results.push(c10_residuals());
    results.push(c11_pinch(&run_cli("dumbbell_mcf"), &run_cli("dumbbell_vp")));
    results.push(c12_determinism(&hemi, &run_cli("perturbed_hemisphere")));

    let mut failed = 0;
    for r in &results {
        println!(
            "criterion {:>2} {} {}: {}",
            r.id,
            if r.passed { "PASS" } else { "FAIL" },
            r.title,
            r.detail
        );
        failed += usize::from(!r.passed);
    }
    println!("{} passed, {failed} failed in {:.1?}", results.len() - failed, start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
