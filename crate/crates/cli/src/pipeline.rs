use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use pullback_lab::certify::{
    classify_run, emit_levy_certificate, first_certificate, trace_digest, verify_certificate, Classification,
    LevyCertificate, ShortCurve, ShortGeodesicReport,
};
use pullback_lab::fiber::{
    compose_iterate_run, init_run, parse_trace, PullbackRun, RunStatus, StepRecord, TraceHeader, ENGINE_VERSION,
};
use pullback_lab::SpherePoint;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Why a command failed; each kind maps to an exit status.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or input (exit 2).
    Input(anyhow::Error),
    /// Numerical failure during a run (exit 3).
    Numerical(anyhow::Error),
    /// A failed check (exit 1).
    Check(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "invalid input: {e:#}"),
            Failure::Numerical(e) => write!(f, "numerical failure: {e:#}"),
            Failure::Check(m) => write!(f, "check failed:\n  {}", m.join("\n  ")),
        }
    }
}

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn numerical(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEntry {
    pub label: String,
    pub position: SpherePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub engine_version: String,
    pub verdict: Classification,
    pub status: RunStatus,
    pub steps: usize,
    pub final_positions: Vec<PositionEntry>,
    pub trace: String,
    pub trace_digest: String,
    pub certificate: Option<String>,
    pub short_geodesics: Option<ShortGeodesicReport>,
    pub notes: Vec<String>,
    pub elapsed_ms: f64,
}

impl RunReport {
    pub fn summary(&self) -> String {
        let verdict = match &self.verdict {
            Classification::Realized { points } => {
                let xs: Vec<String> = points.iter().map(|p| format!("{}={}", p.label, p.x_star)).collect();
                format!("Realized({})", xs.join(", "))
            }
            Classification::Obstructed { p, rate_estimate, .. } => {
                format!("Obstructed({p}), rate {rate_estimate:.6}")
            }
            Classification::Undecided { reason } => format!("Undecided ({reason})"),
        };
        let cert = match &self.certificate {
            Some(c) => format!(", certificate {c}"),
            None => String::new(),
        };
        format!("{}: {verdict} after {} steps{cert}", self.name, self.steps)
    }
}

fn final_positions(run: &PullbackRun) -> Vec<PositionEntry> {
    let n = run.step();
    let mut out: Vec<PositionEntry> = run
        .fixed_labels()
        .into_iter()
        .zip(run.positions(n))
        .map(|(label, position)| PositionEntry {
            label: label.to_string(),
            position,
        })
        .collect();
    if let Some(snap) = run.snapshot(n) {
        for (spec, position) in run.trivial_specs().iter().zip(&snap.trivial) {
            out.push(PositionEntry {
                label: spec.label.clone(),
                position: *position,
            });
        }
    }
    out
}

/// Continues an obstructed run until a certificate is emitted, the step
/// budget is used up, or a step fails; the note says which.
fn extend_for_certificate(
    run: &mut PullbackRun,
    max_iters: usize,
) -> anyhow::Result<(Option<LevyCertificate>, Option<String>)> {
    let mut next = 1;
    loop {
        while next <= run.step() {
            if let Some(cert) = emit_levy_certificate(run, next, None)? {
                return Ok((Some(cert), None));
            }
            next += 1;
        }
        if run.step() >= max_iters {
            return Ok((None, Some(format!("no certificate within {max_iters} steps"))));
        }
        if let Err(e) = run.pullback_step() {
            return Ok((
                None,
                Some(format!("no certificate; pullback stopped at step {}: {e}", run.step())),
            ));
        }
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// analyze → init → run_until → classify → certify, writing the trace,
/// the report and any certificate into `out`.
pub fn execute(config: &RunConfig, out: &Path) -> Result<RunReport, Failure> {
    let started = Instant::now();
    let tol = &config.tolerances;
    let mut run = compose_iterate_run(&config.spec, config.iterate, tol).map_err(input)?;
    let status = run.run_until(&config.stop()).map_err(numerical)?;
    let mut verdict = classify_run(&run, &status);
    let mut cert = None;
    let mut notes = Vec::new();
    if matches!(verdict, Classification::Obstructed { .. }) {
        let (found, note) = extend_for_certificate(&mut run, config.max_iters).map_err(numerical)?;
        cert = found;
        notes.extend(note);
    }

    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(input)?;
    let trace_name = format!("{}.trace.jsonl", config.name);
    let bytes = run.trace_bytes();
    fs::write(out.join(&trace_name), &bytes).map_err(|e| input(anyhow!(e)))?;
    let digest = trace_digest(&bytes);

    let mut cert_name = None;
    let mut short = None;
    if let Some(mut c) = cert {
        c.trace_digest = Some(digest.clone());
        if let Classification::Obstructed { certificate, .. } = &mut verdict {
            *certificate = Some(Box::new(c.clone()));
        }
        let name = format!("{}.certificate.json", config.name);
        write_json(&out.join(&name), &c).map_err(input)?;
        let entry = ShortCurve {
            step: c.step,
            cluster: c.cluster.clone(),
            length_bound: c.length_bound,
        };
        short = Some(ShortGeodesicReport::new(c.k, vec![entry]).map_err(numerical)?);
        cert_name = Some(name);
    }

    let report = RunReport {
        name: config.name.clone(),
        engine_version: ENGINE_VERSION.to_string(),
        verdict,
        status,
        steps: run.step(),
        final_positions: final_positions(&run),
        trace: trace_name,
        trace_digest: digest,
        certificate: cert_name,
        short_geodesics: short,
        notes,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    write_json(&out.join(format!("{}.report.json", config.name)), &report).map_err(input)?;
    Ok(report)
}

pub struct LoadedTrace {
    pub bytes: Vec<u8>,
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
}

pub fn load_trace(path: &Path) -> anyhow::Result<LoadedTrace> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).context("trace is not UTF-8")?;
    let (header, records) = parse_trace(text)?;
    Ok(LoadedTrace { bytes, header, records })
}

/// Re-executes the run described by a trace header for as many steps as the trace has.
pub fn replay(trace: &LoadedTrace) -> anyhow::Result<PullbackRun> {
    let mut run = init_run(&trace.header.spec, &trace.header.tolerances)?;
    for _ in 1..trace.records.len() {
        run.pullback_step()?;
    }
    Ok(run)
}

pub fn classify_trace(path: &Path) -> Result<Classification, Failure> {
    let trace = load_trace(path).map_err(input)?;
    let run = replay(&trace).map_err(numerical)?;
    let status = run.detect().unwrap_or(RunStatus::Undecided);
    Ok(classify_run(&run, &status))
}

pub fn certify_trace(path: &Path) -> Result<Option<LevyCertificate>, Failure> {
    let trace = load_trace(path).map_err(input)?;
    let run = replay(&trace).map_err(numerical)?;
    let digest = trace_digest(&trace.bytes);
    first_certificate(&run, Some(&digest)).map_err(numerical)
}

/// Largest deviation tolerated between stored and replayed positions.
const REPLAY_TOL: f64 = 1e-12;
const DIAGRAM_TOL: f64 = 1e-8;
const FUNCTORIALITY_TOL: f64 = 1e-8;
const FUNCTORIALITY_STEPS: usize = 20;

/// Replays a trace and checks it: stored positions match the replay, the
/// diagram `g(x_{n+1}) = x_n` holds, the composed second-iterate run agrees
/// with every other step, and the certificate (if any) verifies against the
/// trace it names.
pub fn check(trace_path: &Path, cert_path: Option<&Path>) -> Result<Vec<String>, Failure> {
    let mut bad = Vec::new();
    let mut notes = Vec::new();
    let trace = load_trace(trace_path).map_err(|e| Failure::Check(vec![format!("{e:#}")]))?;
    let run = replay(&trace).map_err(|e| Failure::Check(vec![format!("replay failed: {e:#}")]))?;
    let g = run.map().clone();

    for (n, rec) in trace.records.iter().enumerate() {
        if rec.n != n {
            bad.push(format!("record {n} is labeled step {}", rec.n));
        }
        let replayed = run.snapshot(n).expect("replayed step");
        for (m, state) in rec.marked.iter().zip(&replayed.fixed) {
            let local_gap = (m.local - state.local).norm();
            if m.chart != state.chart
                || local_gap > REPLAY_TOL * state.local.norm()
                || m.position.chordal(&state.position) > REPLAY_TOL
            {
                bad.push(format!(
                    "step {n}, {}: stored position differs from the replay",
                    m.label
                ));
            }
            if m.chart.to_original(m.local).chordal(&m.position) > REPLAY_TOL {
                bad.push(format!("step {n}, {}: position and chart coordinate disagree", m.label));
            }
        }
        if n == 0 {
            continue;
        }
        for (m, before) in rec.marked.iter().zip(&trace.records[n - 1].marked) {
            let defect = g.eval(m.position).chordal(&before.position);
            if !(defect < DIAGRAM_TOL) {
                bad.push(format!(
                    "step {n}, {}: diagram defect |g(x_n) − x_(n−1)| = {defect:e}",
                    m.label
                ));
            }
        }
    }
    notes.push(format!("{} steps replayed; diagram invariant checked", run.step()));

    if run.marked_count() > 0 {
        match &trace.header.iterate_of {
            Some(origin) => {
                // Step n of an iterate run must agree with step m·n of the base run.
                let steps = FUNCTORIALITY_STEPS.min(run.step());
                match init_run(&origin.spec, &trace.header.tolerances) {
                    Ok(mut base) => {
                        let mut worst: f64 = 0.0;
                        'outer: for n in 1..=steps {
                            for _ in 0..origin.m {
                                if let Err(e) = base.pullback_step() {
                                    bad.push(format!("base run failed at step {}: {e}", base.step() + 1));
                                    break 'outer;
                                }
                            }
                            for (a, b) in run.positions(n).iter().zip(base.positions(origin.m * n)) {
                                worst = worst.max(a.chordal(&b));
                            }
                        }
                        if !(worst < FUNCTORIALITY_TOL) {
                            bad.push(format!("iterate run deviates from the base run by {worst:e}"));
                        }
                        notes.push(format!(
                            "functoriality checked against the base run over {steps} steps (max deviation {worst:.1e})"
                        ));
                    }
                    Err(e) => bad.push(format!("base run could not start: {e}")),
                }
            }
            None => {
                let steps = FUNCTORIALITY_STEPS.min(run.step() / 2);
                if steps > 0 {
                    match compose_iterate_run(&trace.header.spec, 2, &trace.header.tolerances) {
                        Ok(mut composed) => {
                            let mut worst: f64 = 0.0;
                            for n in 1..=steps {
                                if let Err(e) = composed.pullback_step() {
                                    bad.push(format!("composed run failed at step {n}: {e}"));
                                    break;
                                }
                                for (a, b) in composed.positions(n).iter().zip(run.positions(2 * n)) {
                                    worst = worst.max(a.chordal(&b));
                                }
                            }
                            if !(worst < FUNCTORIALITY_TOL) {
                                bad.push(format!("second-iterate run deviates by {worst:e}"));
                            }
                            notes.push(format!(
                                "functoriality checked over {steps} composed steps (max deviation {worst:.1e})"
                            ));
                        }
                        Err(e) => bad.push(format!("composed run could not start: {e}")),
                    }
                }
            }
        }
    }

    if let Some(path) = cert_path {
        let cert: Option<LevyCertificate> = fs::read_to_string(path)
            .map_err(anyhow::Error::from)
            .and_then(|t| serde_json::from_str(&t).map_err(anyhow::Error::from))
            .map_err(|e| bad.push(format!("certificate {}: {e}", path.display())))
            .ok();
        if let Some(cert) = cert {
            let digest = trace_digest(&trace.bytes);
            let report = verify_certificate(&cert, &run, Some(&digest));
            bad.extend(report.mismatches);
            notes.push(format!(
                "certificate at step {} verified against digest {digest}",
                cert.step
            ));
        }
    }

    if bad.is_empty() {
        Ok(notes)
    } else {
        Err(Failure::Check(bad))
    }
}

pub fn output_dir(flag: Option<PathBuf>) -> PathBuf {
    std::env::var_os("PULLBACK_LAB_OUT")
        .map(PathBuf::from)
        .or(flag)
        .unwrap_or_else(|| PathBuf::from("out"))
}
