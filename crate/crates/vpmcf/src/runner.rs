//! Scenario execution: builds the initial state, runs the flow with the
//! monitor and convergence observers, and writes every output file.

use std::path::{Path, PathBuf};

use vpmcf_core::convergence::{ConvergenceObserver, ConvergenceReport};
use vpmcf_core::flow::{self, Control, FlowError, FlowMode, Observer, Termination};
use vpmcf_core::monitor::{self, Monitor, MonitorReport};
use vpmcf_core::{build_profile, validate, FlowState};

use crate::config::RunConfig;
use crate::output::{
    self, Diagnostic, JsonLines, SeriesRow, SeriesWriter, StateSummary, DIAGNOSTIC_FILE, MONITOR_FILE, SUMMARY_FILE,
};

/// Process exit status of `vpmcf run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Converged,
    Usage,
    Pinch,
    HardFail,
    /// Reached the horizon without converging.
    Horizon,
    /// Projection failure or non-finite positions.
    Numerical,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Converged => 0,
            ExitStatus::Usage => 1,
            ExitStatus::Pinch => 2,
            ExitStatus::HardFail => 3,
            ExitStatus::Horizon => 4,
            ExitStatus::Numerical => 5,
        }
    }

    fn reason(self) -> &'static str {
        match self {
            ExitStatus::Converged => "converged",
            ExitStatus::Usage => "usage_or_config_error",
            ExitStatus::Pinch => "pinch_detected",
            ExitStatus::HardFail => "monitor_hard_fail",
            ExitStatus::Horizon => "horizon_without_convergence",
            ExitStatus::Numerical => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: ExitStatus,
    pub message: String,
    pub output_dir: PathBuf,
    pub final_state: Option<StateSummary>,
    pub convergence: Option<ConvergenceReport>,
    pub empirical_rate: Option<f64>,
}

#[derive(Debug, serde::Serialize)]
struct RunRecord<'a> {
    status: ExitStatus,
    exit_code: i32,
    termination: Option<Termination>,
    observations: u64,
    final_state: &'a StateSummary,
    convergence: Option<&'a ConvergenceReport>,
    empirical_rate: Option<f64>,
    ledger: &'a monitor::BoundLedger,
}

struct Recorder {
    monitor: Monitor,
    convergence: ConvergenceObserver,
    stop_on_convergence: bool,
    halt_on_hard_fail: bool,
    series: Option<SeriesWriter>,
    log: Option<JsonLines>,
    dir: PathBuf,
    svg_every: Option<u64>,
    io_error: Option<std::io::Error>,
    hard_failed: bool,
}

impl Recorder {
    fn record(&mut self, state: &FlowState, report: &MonitorReport, conv: &ConvergenceReport) -> std::io::Result<()> {
        if let Some(s) = &mut self.series {
            s.write(&SeriesRow::new(state, report, conv))?;
        }
        if let Some(l) = &mut self.log {
            l.write(report)?;
        }
        if let Some(every) = self.svg_every {
            if state.step_index().is_multiple_of(every) {
                self.snapshot(state, Some(report), Some(conv))?;
            }
        }
        Ok(())
    }

    fn snapshot(&self, state: &FlowState, report: Option<&MonitorReport>, conv: Option<&ConvergenceReport>) -> std::io::Result<()> {
        std::fs::write(
            output::snapshot_path(&self.dir, state.step_index()),
            output::render_svg(state, report, conv),
        )
    }

    fn finish(&mut self) -> std::io::Result<()> {
        if let Some(s) = self.series.take() {
            s.finish()?;
        }
        if let Some(l) = self.log.take() {
            l.finish()?;
        }
        Ok(())
    }
}

impl Observer for Recorder {
    fn observe(&mut self, state: &FlowState) -> Control {
        let report = self.monitor.check(state);
        let conv = self.convergence.evaluate(state);
        if let Err(e) = self.record(state, &report, &conv) {
            self.io_error = Some(e);
            return Control::Halt;
        }
        if report.hard_fail {
            self.hard_failed = true;
            if self.halt_on_hard_fail {
                return Control::Halt;
            }
        }
        if self.stop_on_convergence && conv.converged {
            Control::Converged
        } else {
            Control::Continue
        }
    }
}

fn usage(dir: &Path, message: String) -> Outcome {
    Outcome {
        status: ExitStatus::Usage,
        message,
        output_dir: dir.to_path_buf(),
        final_state: None,
        convergence: None,
        empirical_rate: None,
    }
}

/// Runs one scenario to completion. Output files go to the resolved output
/// directory; a nonzero status always leaves `diagnostic.json` behind.
pub fn run_scenario(config: &RunConfig) -> Outcome {
    let dir = config.resolved_output_dir();
    let outcome = execute(config, &dir);
    if outcome.0.status != ExitStatus::Converged {
        let (o, diag) = outcome;
        let diag = diag.unwrap_or_else(|| Diagnostic {
            exit_code: o.status.code(),
            reason: o.status.reason().to_string(),
            message: o.message.clone(),
            neck_node: None,
            neck_r: None,
            last_state: o.final_state.clone(),
            monitor: None,
        });
        let _ = write_diagnostic(&dir, &diag);
        return o;
    }
    outcome.0
}

/// Writes `diagnostic.json`, creating the directory if needed.
pub fn write_diagnostic(dir: &Path, diag: &Diagnostic) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    output::write_json(&dir.join(DIAGNOSTIC_FILE), diag)
}

fn execute(config: &RunConfig, dir: &Path) -> (Outcome, Option<Diagnostic>) {
    if let Err(e) = std::fs::create_dir_all(dir) {
        return (usage(dir, format!("cannot create output directory {}: {e}", dir.display())), None);
    }
    let curve = match build_profile(&config.shape()) {
        Ok(c) => c,
        Err(e) => return (usage(dir, format!("invalid scenario: {e}")), None),
    };
    let check = validate(&curve);
    if let Some(f) = check.first_failure() {
        return (usage(dir, format!("initial curve fails `{}`: {}", f.name, f.detail)), None);
    }
    let state0 = match FlowState::new(curve) {
        Ok(s) => s,
        Err(e) => return (usage(dir, format!("initial state: {e}")), None),
    };
    let ledger = match monitor::ledger_from_initial(
        &state0,
        &config.c_alpha_pairs(),
        &config.monitor.alpha_list,
        config.monitor.t_burn,
    ) {
        Ok(l) => l,
        Err(e) => return (usage(dir, format!("monitor setup: {e}")), None),
    };
    let open = || -> std::io::Result<(SeriesWriter, JsonLines)> {
        Ok((SeriesWriter::create(dir)?, JsonLines::create(&dir.join(MONITOR_FILE))?))
    };
    let (series, log) = match open() {
        Ok(w) => w,
        Err(e) => return (usage(dir, format!("cannot write outputs in {}: {e}", dir.display())), None),
    };
    let mode = config.policy.mode;
    let mut recorder = Recorder {
        monitor: Monitor::new(ledger, mode),
        convergence: ConvergenceObserver::new(config.tolerances, mode),
        stop_on_convergence: mode == FlowMode::VolumePreserving,
        halt_on_hard_fail: config.monitor.halt_on_hard_fail,
        series: Some(series),
        log: Some(log),
        dir: dir.to_path_buf(),
        svg_every: config.emit_svg.then_some(config.svg_every),
        io_error: None,
        hard_failed: false,
    };

    let result = flow::run(
        state0,
        &config.policy,
        config.horizon,
        config.observe_every,
        &mut [&mut recorder],
    );
    let flushed = recorder.finish();

    let (status, message, last, termination, observations, neck) = match &result {
        Ok(summary) => {
            let status = match summary.termination {
                Termination::Converged => ExitStatus::Converged,
                Termination::Halted if recorder.io_error.is_some() => ExitStatus::Usage,
                Termination::Halted => ExitStatus::HardFail,
                Termination::Horizon if recorder.hard_failed => ExitStatus::HardFail,
                Termination::Horizon => ExitStatus::Horizon,
            };
            let message = match (&recorder.io_error, status) {
                (Some(e), _) => format!("output error: {e}"),
                (None, ExitStatus::HardFail) => failed_checks(recorder.monitor.first_failure()),
                _ => format!("{:?} at t = {}", summary.termination, summary.final_state.t()),
            };
            (status, message, &summary.final_state, Some(summary.termination), summary.observations, None)
        }
        Err(e) => {
            let (status, neck) = match e.error {
                FlowError::Pinch { node, r } => (ExitStatus::Pinch, Some((node, r))),
                FlowError::InvalidPolicy(_) => (ExitStatus::Usage, None),
                _ => (ExitStatus::Numerical, None),
            };
            (status, e.to_string(), e.last_state.as_ref(), None, 0, neck)
        }
    };
    let (status, message) = match flushed {
        Err(e) if status != ExitStatus::Usage => (ExitStatus::Usage, format!("output error: {e}")),
        _ => (status, message),
    };
    if config.emit_svg {
        let _ = recorder.snapshot(last, recorder.monitor.last_report(), recorder.convergence.last_report());
    }
    let summary = StateSummary::of(last);
    let conv = recorder.convergence.last_report().copied();
    let rate = recorder.convergence.empirical_rate();
    let record = RunRecord {
        status,
        exit_code: status.code(),
        termination,
        observations,
        final_state: &summary,
        convergence: conv.as_ref(),
        empirical_rate: rate,
        ledger: recorder.monitor.ledger(),
    };
    let _ = output::write_json(&dir.join(SUMMARY_FILE), &record);

    let diagnostic = (status != ExitStatus::Converged).then(|| Diagnostic {
        exit_code: status.code(),
        reason: status.reason().to_string(),
        message: message.clone(),
        neck_node: neck.map(|n| n.0),
        neck_r: neck.map(|n| n.1),
        last_state: Some(summary.clone()),
        monitor: recorder
            .monitor
            .first_failure()
            .or(recorder.monitor.last_report())
            .cloned(),
    });
    let outcome = Outcome {
        status,
        message,
        output_dir: dir.to_path_buf(),
        final_state: Some(summary),
        convergence: conv,
        empirical_rate: rate,
    };
    (outcome, diagnostic)
}

fn failed_checks(report: Option<&MonitorReport>) -> String {
    match report {
        Some(r) => {
            let ids: Vec<&str> = r.failures().map(|c| c.id.as_str()).collect();
            format!("bound checks failed at t = {}: {}", r.t, ids.join(", "))
        }
        None => String::from("bound checks failed"),
    }
}
