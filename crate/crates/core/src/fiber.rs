//! The pullback engine on the Bers fiber.
//!
//! A fiber point is a marked position `x` together with a path from the
//! basepoint `b` to `x` in `Ĉ − P`. One pullback step lifts that path through
//! `g` starting at the branch point `b′` and prefixes the reference path `δ`,
//! so the new position satisfies `g(x_{n+1}) = x_n`.
//!
//! Every fixed marked point carries its own chart. When a position comes
//! close to a finite puncture the chart is recentered there (the puncture
//! becomes 0 and the conjugated map is pinned to fix 0 exactly when the
//! puncture is fixed), so the distance to that puncture keeps full relative
//! precision far below the spacing of doubles near the puncture itself.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::DensityBound;
use crate::lifting::{concatenate, simplify, Lifter, Path};
use crate::ratmap::{PostsingularAnalysis, RationalMap};
use crate::sphere::{Configuration, MobiusTransform, SpherePoint};
use crate::tolerances::Tolerances;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_MAX_ITERS: usize = 5000;

/// Distance to a finite puncture below which the chart is recentered there.
const RECENTER_RADIUS: f64 = 1e-2;
/// Distance at which a recentered chart is released again.
const RELEASE_RADIUS: f64 = 1e-1;
const FAR_RADIUS: f64 = 1e6;
const FAR_RELEASE: f64 = 1e5;
/// Smallest distance to a pinned puncture that is still resolved with margin
/// above the subnormal range.
pub const PINNED_SEPARATION_FLOOR: f64 = 1e-280;

/// One marked point of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkedSpec {
    /// A point iterated by pullback, with its branch datum.
    Fixed {
        label: String,
        basepoint: SpherePoint,
        branch_point: SpherePoint,
        /// Reference path from the basepoint to the branch point; straight when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<Path>,
    },
    /// A strictly preperiodic point: it jumps to `preimage` and stays there.
    Trivial {
        label: String,
        initial: SpherePoint,
        image: SpherePoint,
        preimage: SpherePoint,
    },
}

impl MarkedSpec {
    pub fn label(&self) -> &str {
        match self {
            MarkedSpec::Fixed { label, .. } | MarkedSpec::Trivial { label, .. } => label,
        }
    }
}

/// Everything needed to start (or replay) a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub map: RationalMap,
    /// Forward-invariant points added to the postsingular set.
    #[serde(default)]
    pub declared: Vec<SpherePoint>,
    pub marked: Vec<MarkedSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDatum {
    #[serde(with = "crate::sphere::complex_serde")]
    pub basepoint: Complex64,
    #[serde(with = "crate::sphere::complex_serde")]
    pub branch_point: Complex64,
    pub delta: Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrivialMarkedSpec {
    pub label: String,
    pub image_label: String,
    pub image: SpherePoint,
    pub preimage: SpherePoint,
    pub initial: SpherePoint,
}

/// A working chart: `to_local` maps original coordinates to local ones, and
/// `pinned` names the puncture sent to 0, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub to_local: MobiusTransform,
    pub pinned: Option<String>,
}

impl Chart {
    pub fn identity() -> Self {
        Chart {
            to_local: MobiusTransform::identity(),
            pinned: None,
        }
    }

    pub fn to_original(&self, z: Complex64) -> SpherePoint {
        self.to_local.inverse().apply(SpherePoint::Finite(z))
    }

    pub fn to_local(&self, z: SpherePoint) -> Option<Complex64> {
        self.to_local.apply(z).finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberPointState {
    pub position: SpherePoint,
    #[serde(with = "crate::sphere::complex_serde")]
    pub local: Complex64,
    pub chart: Chart,
    /// Path from the basepoint to the position, in local coordinates.
    pub path: Path,
    pub step: usize,
}

/// The map and branch datum expressed in one chart.
#[derive(Debug, Clone)]
struct LocalFrame {
    chart: Chart,
    lifter: Lifter,
    punctures: Vec<Complex64>,
    delta: Path,
    branch_point: Complex64,
}

impl LocalFrame {
    fn new(chart: Chart, run: &RunContext, datum: &BranchDatum) -> Result<Self> {
        let t = chart.to_local;
        let map = run.local_map(&chart)?;
        let to_local = |z: Complex64| {
            t.apply_finite(z)
                .ok_or_else(|| Error::InvalidRun("branch datum meets the chart pole".into()))
        };
        let delta = Path::new(
            datum
                .delta
                .nodes()
                .iter()
                .map(|z| to_local(*z))
                .collect::<Result<_>>()?,
        )?;
        let punctures: Vec<Complex64> = run.base.points().filter_map(|p| t.apply(p).finite()).collect();
        Ok(LocalFrame {
            lifter: Lifter::new(&map, &run.tol)?.snap_critical_values(&punctures, run.tol.eps_cycle),
            punctures,
            branch_point: to_local(datum.branch_point)?,
            delta,
            chart,
        })
    }
}

fn label_index(config: &Configuration, label: &str) -> Result<usize> {
    config
        .labels()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

/// Immutable data shared by all marked points of a run.
#[derive(Debug, Clone)]
struct RunContext {
    map: RationalMap,
    analysis: PostsingularAnalysis,
    base: Configuration,
    tol: Tolerances,
}

impl RunContext {
    /// `g` conjugated into a chart, with 0 pinned as a fixed point when the
    /// puncture sent there is fixed.
    fn local_map(&self, chart: &Chart) -> Result<RationalMap> {
        if *chart == Chart::identity() {
            return Ok(self.map.clone());
        }
        let mut m = self.map.conjugate(&chart.to_local);
        if let Some(label) = &chart.pinned {
            let idx = label_index(&self.base, label)?;
            if self.analysis.image[idx] == idx {
                m.pin_origin_fixed();
            }
        }
        Ok(m)
    }

    /// Chart for a position, keeping the current one while it is still adequate.
    fn choose_chart(&self, position: SpherePoint, current: &Chart) -> Chart {
        let z = match position {
            SpherePoint::Finite(z) => z,
            SpherePoint::Infinity => return current.clone(),
        };
        let pinned_point = current.pinned.as_ref().and_then(|l| self.base.get(l));
        match pinned_point {
            Some(SpherePoint::Finite(p)) if (z - p).norm() < RELEASE_RADIUS => return current.clone(),
            Some(SpherePoint::Infinity) if z.norm() > FAR_RELEASE => return current.clone(),
            _ => {}
        }
        if current.pinned.is_none() && current.to_local != MobiusTransform::identity() && z.norm() > FAR_RELEASE {
            return current.clone();
        }
        if z.norm() > FAR_RADIUS {
            if let Some(q) = self.base.points().find_map(|p| p.finite()) {
                let one = Complex64::new(1.0, 0.0);
                let zero = Complex64::new(0.0, 0.0);
                let to_local = MobiusTransform::new(zero, one, one, -q, 0.0).expect("nondegenerate");
                let pinned = self
                    .base
                    .entries()
                    .iter()
                    .find(|(_, p)| p.is_infinite())
                    .map(|(l, _)| l.clone());
                return Chart { to_local, pinned };
            }
        }
        let nearest = self
            .base
            .entries()
            .iter()
            .filter_map(|(l, p)| p.finite().map(|p| (l, p, (z - p).norm())))
            .min_by(|a, b| a.2.total_cmp(&b.2));
        if let Some((label, p, d)) = nearest {
            if d < RECENTER_RADIUS {
                return Chart {
                    to_local: MobiusTransform::translation(-p),
                    pinned: Some(label.clone()),
                };
            }
        }
        Chart::identity()
    }

    /// Separation of a marked position from a base point: Euclidean in the
    /// chart when that point is pinned at 0, chordal otherwise.
    fn separation(&self, state: &FiberPointState, index: usize) -> f64 {
        let (label, p) = &self.base.entries()[index];
        if state.chart.pinned.as_deref() == Some(label.as_str()) {
            state.local.norm()
        } else {
            state.position.chordal(p)
        }
    }
}

#[derive(Debug, Clone)]
struct FixedMarked {
    label: String,
    datum: BranchDatum,
    state: FiberPointState,
    frame: LocalFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub fixed: Vec<FiberPointState>,
    pub trivial: Vec<SpherePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedRecord {
    pub label: String,
    pub position: SpherePoint,
    pub chart: Chart,
    #[serde(with = "crate::sphere::complex_serde")]
    pub local: Complex64,
    pub path: Path,
    pub nodes: usize,
    /// Largest lift residual of the step.
    pub residual: f64,
    /// Chordal `|g(x_n) − x_{n−1}|`.
    pub diagram: f64,
    /// Distance to each base point (see `PullbackRun::separation`).
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrivialRecord {
    pub label: String,
    pub position: SpherePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    pub marked: Vec<MarkedRecord>,
    pub trivial: Vec<TrivialRecord>,
    /// Upper bound on the Teichmüller distance from step `n − 1` to step `n`.
    pub step_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub engine: String,
    pub version: String,
    pub spec: RunSpec,
    pub tolerances: Tolerances,
    pub base: Configuration,
    /// Present when the run is for an iterate of another configured map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate_of: Option<IterateOrigin>,
}

/// The base configuration and iterate count a composed run was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateOrigin {
    pub m: usize,
    pub spec: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Header(Box<TraceHeader>),
    Step(StepRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    CandidateRealized,
    CandidatePuncture {
        marked: String,
        puncture: String,
        point: SpherePoint,
    },
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub max_iters: usize,
    /// Keep iterating at least this many steps even after convergence is detected.
    pub min_steps: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            max_iters: DEFAULT_MAX_ITERS,
            min_steps: 0,
        }
    }
}

/// A marked Thurston map being iterated on its Bers fiber.
#[derive(Debug, Clone)]
pub struct PullbackRun {
    spec: RunSpec,
    ctx: RunContext,
    fixed: Vec<FixedMarked>,
    trivial: Vec<(TrivialMarkedSpec, SpherePoint)>,
    history: Vec<Snapshot>,
    records: Vec<StepRecord>,
    iterate_of: Option<IterateOrigin>,
}

fn finite_point(p: SpherePoint, what: &str) -> Result<Complex64> {
    p.finite()
        .ok_or_else(|| Error::InvalidBranchDatum(format!("{what} must be finite")))
}

/// Validates the configuration and builds the run at step 0.
pub fn init_run(spec: &RunSpec, tol: &Tolerances) -> Result<PullbackRun> {
    tol.validate()?;
    let map = spec.map.clone();
    let analysis = map.postsingular_analysis(&spec.declared, tol)?;
    if !analysis.is_psf {
        let value = analysis
            .critical_values
            .first()
            .copied()
            .unwrap_or(SpherePoint::Infinity);
        return Err(Error::NotPostsingularlyFinite {
            value,
            steps: tol.max_orbit,
        });
    }
    let base = analysis.postsingular.clone();
    if base.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: base.len(),
        });
    }
    if base.len() + spec.marked.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: base.len() + spec.marked.len(),
        });
    }
    let ctx = RunContext {
        map,
        analysis,
        base,
        tol: *tol,
    };

    // the marked set A, used for the distinctness check
    let mut a_config = ctx.base.clone();
    let mut fixed = Vec::new();
    let mut trivial = Vec::new();
    for m in &spec.marked {
        match m {
            MarkedSpec::Fixed {
                label,
                basepoint,
                branch_point,
                delta,
            } => {
                a_config = a_config.with_point(label, *basepoint, tol)?;
                let b = finite_point(*basepoint, "basepoint")?;
                let b1 = finite_point(*branch_point, "branch point")?;
                let residual = ctx.map.eval(*branch_point).chordal(basepoint);
                if !(residual < tol.eps_lift) {
                    return Err(Error::InvalidBranchDatum(format!(
                        "{label}: g(branch point) misses the basepoint by {residual:e}"
                    )));
                }
                let delta = match delta {
                    None => Path::segment(b, b1),
                    Some(d) => {
                        let gap_start = SpherePoint::Finite(d.start()).chordal(basepoint);
                        let gap_end = SpherePoint::Finite(d.end()).chordal(branch_point);
                        if gap_start > tol.eps_lift || gap_end > tol.eps_lift {
                            return Err(Error::InvalidBranchDatum(format!(
                                "{label}: reference path does not run from the basepoint to the branch point"
                            )));
                        }
                        let mut nodes = d.nodes().to_vec();
                        nodes[0] = b;
                        *nodes.last_mut().expect("nonempty") = b1;
                        Path::new(nodes)?
                    }
                };
                let finite_base: Vec<Complex64> = ctx.base.points().filter_map(|p| p.finite()).collect();
                let clearance = delta.clearance(&finite_base);
                if !(clearance > tol.eps_clear) {
                    return Err(Error::InvalidBranchDatum(format!(
                        "{label}: reference path passes within {clearance:e} of the postsingular set"
                    )));
                }
                let datum = BranchDatum {
                    basepoint: b,
                    branch_point: b1,
                    delta,
                };
                let chart = ctx.choose_chart(*basepoint, &Chart::identity());
                let frame = LocalFrame::new(chart.clone(), &ctx, &datum)?;
                let local = chart
                    .to_local(*basepoint)
                    .ok_or_else(|| Error::InvalidRun("basepoint at the chart pole".into()))?;
                fixed.push(FixedMarked {
                    label: label.clone(),
                    datum,
                    state: FiberPointState {
                        position: *basepoint,
                        local,
                        chart,
                        path: Path::point(local),
                        step: 0,
                    },
                    frame,
                });
            }
            MarkedSpec::Trivial {
                label,
                initial,
                image,
                preimage,
            } => {
                a_config = a_config.with_point(label, *initial, tol)?;
                let idx = ctx.analysis.index_of(image, tol.eps_sep).ok_or_else(|| {
                    Error::InvalidBranchDatum(format!("{label}: image {image} is not a postsingular point"))
                })?;
                let residual = ctx.map.eval(*preimage).chordal(image);
                if !(residual < tol.eps_lift) {
                    return Err(Error::InvalidBranchDatum(format!(
                        "{label}: g(preimage) misses the image by {residual:e}"
                    )));
                }
                if ctx.base.contains_point(preimage, tol.eps_sep) {
                    return Err(Error::InvalidBranchDatum(format!(
                        "{label}: preimage lies in the postsingular set"
                    )));
                }
                let spec = TrivialMarkedSpec {
                    label: label.clone(),
                    image_label: ctx.base.entries()[idx].0.clone(),
                    image: ctx.base.entries()[idx].1,
                    preimage: *preimage,
                    initial: *initial,
                };
                trivial.push((spec, *initial));
            }
        }
    }

    let mut run = PullbackRun {
        spec: spec.clone(),
        ctx,
        fixed,
        trivial,
        history: Vec::new(),
        records: Vec::new(),
        iterate_of: None,
    };
    run.push_snapshot(&[], &[]);
    Ok(run)
}

impl PullbackRun {
    pub fn spec(&self) -> &RunSpec {
        &self.spec
    }

    pub fn map(&self) -> &RationalMap {
        &self.ctx.map
    }

    pub fn analysis(&self) -> &PostsingularAnalysis {
        &self.ctx.analysis
    }

    /// The base set `B = P` (plus declared points).
    pub fn base(&self) -> &Configuration {
        &self.ctx.base
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.ctx.tol
    }

    /// Index of the latest step.
    pub fn step(&self) -> usize {
        self.history.len() - 1
    }

    pub fn fixed_labels(&self) -> Vec<&str> {
        self.fixed.iter().map(|f| f.label.as_str()).collect()
    }

    pub fn trivial_specs(&self) -> Vec<&TrivialMarkedSpec> {
        self.trivial.iter().map(|(s, _)| s).collect()
    }

    pub fn branch_data(&self) -> Vec<&BranchDatum> {
        self.fixed.iter().map(|f| &f.datum).collect()
    }

    /// Number of marked points outside the base set, `|A| − |B|`.
    pub fn marked_count(&self) -> usize {
        self.fixed.len() + self.trivial.len()
    }

    pub fn snapshot(&self, n: usize) -> Option<&Snapshot> {
        self.history.get(n)
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Fixed-marked positions at step `n` in original coordinates.
    pub fn positions(&self, n: usize) -> Vec<SpherePoint> {
        self.history[n].fixed.iter().map(|s| s.position).collect()
    }

    /// The marked configuration `A` at step `n` in original coordinates.
    pub fn a_configuration(&self, n: usize) -> Vec<(String, SpherePoint)> {
        let snap = &self.history[n];
        let mut out: Vec<(String, SpherePoint)> = self.ctx.base.entries().to_vec();
        for (f, s) in self.fixed.iter().zip(&snap.fixed) {
            out.push((f.label.clone(), s.position));
        }
        for ((t, _), p) in self.trivial.iter().zip(&snap.trivial) {
            out.push((t.label.clone(), *p));
        }
        out
    }

    /// The marked configuration at step `n` in the coordinates of `chart`;
    /// a fixed marked point already expressed in that chart keeps its exact
    /// local coordinate. Points at the chart pole are returned as ∞.
    pub fn a_configuration_in(&self, n: usize, chart: &Chart) -> Vec<(String, SpherePoint)> {
        let snap = &self.history[n];
        let t = chart.to_local;
        let mut out: Vec<(String, SpherePoint)> = self
            .ctx
            .base
            .entries()
            .iter()
            .map(|(l, p)| (l.clone(), t.apply(*p)))
            .collect();
        for (f, s) in self.fixed.iter().zip(&snap.fixed) {
            let p = if s.chart == *chart {
                SpherePoint::Finite(s.local)
            } else {
                t.apply(s.position)
            };
            out.push((f.label.clone(), p));
        }
        for ((spec, _), p) in self.trivial.iter().zip(&snap.trivial) {
            out.push((spec.label.clone(), t.apply(*p)));
        }
        out
    }

    /// Separation of fixed marked point `i` at step `n` from base point `index`.
    pub fn separation(&self, n: usize, i: usize, index: usize) -> f64 {
        self.ctx.separation(&self.history[n].fixed[i], index)
    }

    /// The lifter for the conjugated map in force in a chart.
    pub fn local_lifter(&self, chart: &Chart) -> Result<Lifter> {
        let punctures: Vec<Complex64> = self
            .ctx
            .base
            .points()
            .filter_map(|p| chart.to_local.apply(p).finite())
            .collect();
        Ok(Lifter::new(&self.ctx.local_map(chart)?, &self.ctx.tol)?
            .snap_critical_values(&punctures, self.ctx.tol.eps_cycle))
    }

    /// One application of the pullback map.
    pub fn pullback_step(&mut self) -> Result<()> {
        let tol = self.ctx.tol;
        let mut residuals = Vec::with_capacity(self.fixed.len());
        let mut diagrams = Vec::with_capacity(self.fixed.len());
        let mut updated = Vec::with_capacity(self.fixed.len());
        for f in &self.fixed {
            let frame = &f.frame;
            let lift = frame.lifter.lift_path(&f.state.path, frame.branch_point)?;
            let joined = concatenate(&frame.delta, &lift.lifted, tol.eps_lift)?;
            let mut path = simplify(&joined, &frame.punctures, tol.eps_clear);
            let mut local = path.end();
            let position = frame.chart.to_original(local);
            diagrams.push(self.ctx.map.eval(position).chordal(&f.state.position));
            residuals.push(lift.max_residual);

            let chart = self.ctx.choose_chart(position, &frame.chart);
            let new_frame = if chart != frame.chart {
                let change = chart.to_local.compose(&frame.chart.to_local.inverse());
                path = path.map_nodes(|z| change.apply_finite(z).unwrap_or(Complex64::new(f64::NAN, f64::NAN)))?;
                local = path.end();
                Some(LocalFrame::new(chart.clone(), &self.ctx, &f.datum)?)
            } else {
                None
            };
            let position = chart.to_original(local);
            updated.push((
                FiberPointState {
                    position,
                    local,
                    chart,
                    path,
                    step: f.state.step + 1,
                },
                new_frame,
            ));
        }
        let trivial_positions: Vec<SpherePoint> = self.trivial.iter().map(|(s, _)| s.preimage).collect();

        self.check_distinct(updated.iter().map(|(s, _)| s), &trivial_positions)?;

        for (f, (state, frame)) in self.fixed.iter_mut().zip(updated) {
            f.state = state;
            if let Some(frame) = frame {
                f.frame = frame;
            }
        }
        for ((_, pos), new) in self.trivial.iter_mut().zip(&trivial_positions) {
            *pos = *new;
        }
        self.push_snapshot(&residuals, &diagrams);
        Ok(())
    }

    fn check_distinct<'a>(
        &self,
        fixed: impl Iterator<Item = &'a FiberPointState>,
        trivial: &[SpherePoint],
    ) -> Result<()> {
        let tol = &self.ctx.tol;
        let fixed: Vec<&FiberPointState> = fixed.collect();
        let collision = |first: &str, second: &str, separation: f64| Error::CollisionDetected {
            first: first.to_string(),
            second: second.to_string(),
            separation,
        };
        for (f, s) in self.fixed.iter().zip(&fixed) {
            for (idx, (plabel, _)) in self.ctx.base.entries().iter().enumerate() {
                let sep = self.ctx.separation(s, idx);
                let pinned = s.chart.pinned.as_deref() == Some(plabel.as_str());
                let floor = if pinned { PINNED_SEPARATION_FLOOR } else { tol.eps_sep };
                if !(sep > floor) {
                    return Err(collision(&f.label, plabel, sep));
                }
            }
        }
        let mut marked: Vec<(&str, SpherePoint)> = self
            .fixed
            .iter()
            .zip(&fixed)
            .map(|(f, s)| (f.label.as_str(), s.position))
            .collect();
        marked.extend(
            self.trivial
                .iter()
                .zip(trivial)
                .map(|((s, _), p)| (s.label.as_str(), *p)),
        );
        for (label, p) in &marked[self.fixed.len()..] {
            if let Some((idx, sep)) = self.ctx.base.nearest(p) {
                if sep <= tol.eps_sep {
                    return Err(collision(label, &self.ctx.base.entries()[idx].0, sep));
                }
            }
        }
        for i in 0..marked.len() {
            for j in (i + 1)..marked.len() {
                let sep = marked[i].1.chordal(&marked[j].1);
                if sep <= tol.eps_sep {
                    return Err(collision(marked[i].0, marked[j].0, sep));
                }
            }
        }
        Ok(())
    }

    fn push_snapshot(&mut self, residuals: &[f64], diagrams: &[f64]) {
        let snap = Snapshot {
            fixed: self.fixed.iter().map(|f| f.state.clone()).collect(),
            trivial: self.trivial.iter().map(|(_, p)| *p).collect(),
        };
        self.history.push(snap);
        let n = self.history.len() - 1;
        let step_bound = if n == 0 { None } else { self.step_bound(n).ok() };
        let marked = self
            .fixed
            .iter()
            .enumerate()
            .map(|(i, f)| MarkedRecord {
                label: f.label.clone(),
                position: f.state.position,
                chart: f.state.chart.clone(),
                local: f.state.local,
                path: f.state.path.clone(),
                nodes: f.state.path.len(),
                residual: residuals.get(i).copied().unwrap_or(0.0),
                diagram: diagrams.get(i).copied().unwrap_or(0.0),
                distances: (0..self.ctx.base.len())
                    .map(|k| self.ctx.separation(&f.state, k))
                    .collect(),
            })
            .collect();
        let trivial = self
            .trivial
            .iter()
            .map(|(s, p)| TrivialRecord {
                label: s.label.clone(),
                position: *p,
            })
            .collect();
        self.records.push(StepRecord {
            n,
            marked,
            trivial,
            step_bound,
        });
    }

    /// Upper bound on the Teichmüller distance between steps `n − 1` and `n`.
    ///
    /// Marked points are moved one at a time. Each moving fixed point follows
    /// the simplified path `reverse(path_{n−1}) · path_n`, measured in the
    /// complement of the base set and of the other marked points; a trivial
    /// point that jumps follows the straight segment. The hyperbolic length of
    /// a path in the fiber dominates the Teichmüller distance because the
    /// fiber is holomorphically embedded.
    pub fn step_bound(&self, n: usize) -> Result<f64> {
        if n == 0 || n >= self.history.len() {
            return Err(Error::InvalidRun(format!("no step pair ({}, {n})", n.wrapping_sub(1))));
        }
        let (prev, cur) = (&self.history[n - 1], &self.history[n]);
        let tol = &self.ctx.tol;
        let mut total = 0.0;
        for i in 0..self.fixed.len() {
            let (a, b) = (&prev.fixed[i], &cur.fixed[i]);
            if a.position == b.position && a.path == b.path {
                continue;
            }
            let t = b.chart.to_local;
            let change = t.compose(&a.chart.to_local.inverse());
            let prev_path = if a.chart == b.chart {
                a.path.clone()
            } else {
                a.path
                    .map_nodes(|z| change.apply_finite(z).unwrap_or(Complex64::new(f64::NAN, f64::NAN)))?
            };
            let mut obstacles: Vec<Complex64> = self.ctx.base.points().filter_map(|p| t.apply(p).finite()).collect();
            let connecting = simplify(
                &concatenate(&prev_path.reverse(), &b.path, tol.eps_lift)?,
                &obstacles,
                tol.eps_clear,
            );
            for (j, other) in cur.fixed.iter().enumerate() {
                let s = if j < i { other } else { &prev.fixed[j] };
                if j != i {
                    obstacles.extend(t.apply(s.position).finite());
                }
            }
            obstacles.extend(prev.trivial.iter().filter_map(|p| t.apply(*p).finite()));
            total += DensityBound::new(&obstacles).path_length(&connecting)?;
        }
        for k in 0..self.trivial.len() {
            let (from, to) = (prev.trivial[k], cur.trivial[k]);
            if from == to {
                continue;
            }
            let mut obstacles: Vec<Complex64> = self.ctx.base.points().filter_map(|p| p.finite()).collect();
            obstacles.extend(cur.fixed.iter().filter_map(|s| s.position.finite()));
            for (j, p) in cur.trivial.iter().enumerate() {
                let p = if j < k { *p } else { prev.trivial[j] };
                if j != k {
                    obstacles.extend(p.finite());
                }
            }
            let (a, b) = (
                finite_point(from, "trivial position")?,
                finite_point(to, "trivial position")?,
            );
            total += DensityBound::new(&obstacles).segment_length(a, b)?;
        }
        Ok(total)
    }

    /// Convergence detected at the latest step, if any.
    pub fn detect(&self) -> Option<RunStatus> {
        let n = self.step();
        let tol = &self.ctx.tol;
        let k = tol.converged_steps;
        if self.fixed.is_empty() {
            return (n >= 1).then_some(RunStatus::CandidateRealized);
        }
        for (i, f) in self.fixed.iter().enumerate() {
            let Some(label) = &f.state.chart.pinned else { continue };
            let d = f.state.local.norm();
            if d >= tol.eps_p || n < k {
                continue;
            }
            let trend = (n - k..n).all(|m| {
                let (a, b) = (&self.history[m].fixed[i], &self.history[m + 1].fixed[i]);
                a.chart.pinned.as_ref() == Some(label)
                    && b.chart.pinned.as_ref() == Some(label)
                    && b.local.norm() < a.local.norm()
            });
            if trend {
                return Some(RunStatus::CandidatePuncture {
                    marked: f.label.clone(),
                    puncture: label.clone(),
                    point: self.ctx.base.get(label).expect("pinned label is a base point"),
                });
            }
        }
        if n < k {
            return None;
        }
        let settled = (0..self.fixed.len()).all(|i| {
            (n - k..n).all(|m| {
                let (a, b) = (&self.history[m].fixed[i], &self.history[m + 1].fixed[i]);
                let step = if a.chart == b.chart {
                    (b.local - a.local).norm()
                } else {
                    a.position.chordal(&b.position)
                };
                step < tol.eps_conv
            })
        });
        let clear = (0..self.fixed.len())
            .all(|i| (0..self.ctx.base.len()).all(|idx| self.separation(n, i, idx) > 10.0 * tol.eps_p));
        (settled && clear).then_some(RunStatus::CandidateRealized)
    }

    /// Iterates until convergence (after at least `min_steps` steps) or `max_iters`.
    pub fn run_until(&mut self, stop: &StopCriteria) -> Result<RunStatus> {
        loop {
            let status = self.detect();
            let n = self.step();
            if let Some(s) = &status {
                if n >= stop.min_steps {
                    return Ok(s.clone());
                }
            }
            if n >= stop.max_iters {
                return Ok(status.unwrap_or(RunStatus::Undecided));
            }
            self.pullback_step()?;
        }
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            engine: "pullback-lab".into(),
            version: ENGINE_VERSION.into(),
            spec: self.spec.clone(),
            tolerances: self.ctx.tol,
            base: self.ctx.base.clone(),
            iterate_of: self.iterate_of.clone(),
        }
    }

    /// Writes the JSONL trace: a header line, then one line per step.
    pub fn write_trace(&self, mut w: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &TraceLine::Header(Box::new(self.header())))?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &TraceLine::Step(r.clone()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn trace_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_trace(&mut out).expect("writing to memory");
        out
    }
}

/// Parses a JSONL trace into its header and step records.
pub fn parse_trace(text: &str) -> Result<(TraceHeader, Vec<StepRecord>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let bad = |e: serde_json::Error| Error::InvalidRun(format!("malformed trace: {e}"));
    let header = match serde_json::from_str::<TraceLine>(lines.next().unwrap_or("")).map_err(bad)? {
        TraceLine::Header(h) => *h,
        TraceLine::Step(_) => return Err(Error::InvalidRun("trace does not start with a header".into())),
    };
    let mut steps = Vec::new();
    for line in lines {
        match serde_json::from_str::<TraceLine>(line).map_err(bad)? {
            TraceLine::Step(s) => steps.push(s),
            TraceLine::Header(_) => return Err(Error::InvalidRun("second header in trace".into())),
        }
    }
    Ok((header, steps))
}

/// The run for `g^{∘m}` whose branch datum is the `m`-fold composite of the
/// given one: `δ_m = δ · lift(δ) ⋯ lift^{m−1}(δ)`, ending at the step-`m`
/// position of the `g`-run. Its step `n` reproduces step `mn` of the `g`-run.
pub fn compose_iterate_run(spec: &RunSpec, m: usize, tol: &Tolerances) -> Result<PullbackRun> {
    if m == 0 {
        return Err(Error::InvalidRun("iterate count must be positive".into()));
    }
    if m == 1 {
        return init_run(spec, tol);
    }
    let mut base_run = init_run(spec, tol)?;
    for _ in 0..m {
        base_run.pullback_step()?;
    }
    let snap = base_run.snapshot(m).expect("m steps taken").clone();
    let map = spec.map.iterate(m);
    let mut marked = Vec::new();
    let mut fixed_index = 0;
    for entry in &spec.marked {
        match entry {
            MarkedSpec::Fixed { label, basepoint, .. } => {
                let state = &snap.fixed[fixed_index];
                fixed_index += 1;
                let back = state.chart.to_local.inverse();
                let nodes = state
                    .path
                    .nodes()
                    .iter()
                    .map(|z| {
                        back.apply_finite(*z)
                            .ok_or_else(|| Error::InvalidRun("composed reference path meets ∞".into()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                marked.push(MarkedSpec::Fixed {
                    label: label.clone(),
                    basepoint: *basepoint,
                    branch_point: state.position,
                    delta: Some(Path::new(nodes)?),
                });
            }
            MarkedSpec::Trivial {
                label,
                initial,
                image,
                preimage,
            } => {
                let mut q = *image;
                for _ in 1..m {
                    q = spec.map.eval(q);
                }
                let q = base_run
                    .analysis()
                    .index_of(&q, tol.eps_cycle)
                    .map(|i| base_run.base().entries()[i].1)
                    .unwrap_or(q);
                marked.push(MarkedSpec::Trivial {
                    label: label.clone(),
                    initial: *initial,
                    image: q,
                    preimage: *preimage,
                });
            }
        }
    }
    let composed = RunSpec {
        map,
        declared: spec.declared.clone(),
        marked,
    };
    let mut run = init_run(&composed, tol)?;
    run.iterate_of = Some(IterateOrigin { m, spec: spec.clone() });
    Ok(run)
}
