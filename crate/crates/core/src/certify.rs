//! Classification of runs and Levy-multicurve certificates.
//!
//! A certificate exhibits a round annulus `U` around a cluster of marked
//! points with `mod(U) > (k+4)·π·e^{k·d₀}/ℓ*`, on which `g` passes a
//! sampled injectivity test, together with the core circle and its
//! successive degree-one lifts. All checks are floating point: the result is
//! numerical evidence, with every tolerance recorded in the artifact.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fiber::{Chart, PullbackRun, RunStatus, ENGINE_VERSION};
use crate::hyperbolic::{ell_star, teich_step_bound, RoundAnnulus};
use crate::lifting::{closure_gap, Lifter, Path};
use crate::ratmap::FixedKind;
use crate::sphere::SpherePoint;
use crate::tolerances::Tolerances;

/// Relative tolerance for recomputed certificate quantities.
const RECOMPUTE_REL: f64 = 1e-12;
/// Relative agreement required between stored and recomputed curve lifts.
const CURVE_REL: f64 = 1e-9;
/// Allowed deviation of the observed decay ratio from `1/|g′(p)|`.
const RATE_SLACK: f64 = 0.1;
/// Critical points are kept this fraction of their distance outside a shrunk annulus.
const SHRINK: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedPoint {
    pub label: String,
    pub x_star: SpherePoint,
    pub residual: f64,
    #[serde(with = "crate::sphere::complex_serde")]
    pub multiplier: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Classification {
    Realized {
        points: Vec<RealizedPoint>,
    },
    Obstructed {
        marked: String,
        puncture: String,
        p: SpherePoint,
        #[serde(with = "crate::sphere::complex_serde")]
        multiplier: Complex64,
        rate_estimate: f64,
        certificate: Option<Box<LevyCertificate>>,
    },
    Undecided {
        reason: String,
    },
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Realized { .. } => "realized",
            Classification::Obstructed { .. } => "obstructed",
            Classification::Undecided { .. } => "undecided",
        }
    }
}

fn undecided(reason: impl Into<String>) -> Classification {
    Classification::Undecided { reason: reason.into() }
}

/// Finalizes a run status into a verdict, checking the fixed-point residual
/// for realized runs and the repelling limit and decay rate for obstructed ones.
pub fn classify_run(run: &PullbackRun, status: &RunStatus) -> Classification {
    let tol = run.tolerances();
    let n = run.step();
    let g = run.map();
    match status {
        RunStatus::Undecided => undecided(format!("no convergence within {n} steps")),
        RunStatus::CandidateRealized => {
            let mut points = Vec::new();
            for (i, label) in run.fixed_labels().into_iter().enumerate() {
                let x = run.positions(n)[i];
                let (gx, multiplier) = g.eval_with_derivative(x);
                let residual = gx.chordal(&x);
                if !(residual < tol.eps_fix) {
                    return undecided(format!(
                        "{label}: limit candidate has fixed-point residual {residual:e}"
                    ));
                }
                let gap = (0..run.base().len())
                    .map(|k| run.separation(n, i, k))
                    .fold(f64::INFINITY, f64::min);
                if !(gap > 10.0 * tol.eps_p) {
                    return undecided(format!(
                        "{label}: limit candidate lies {gap:e} from the postsingular set"
                    ));
                }
                points.push(RealizedPoint {
                    label: label.to_string(),
                    x_star: x,
                    residual,
                    multiplier,
                });
            }
            Classification::Realized { points }
        }
        RunStatus::CandidatePuncture {
            marked,
            puncture,
            point,
        } => {
            let Some(idx) = run.base().labels().position(|l| l == puncture) else {
                return undecided(format!("unknown puncture {puncture}"));
            };
            let (_, multiplier) = g.eval_with_derivative(*point);
            let fixed = run.analysis().image[idx] == idx;
            if !fixed || FixedKind::classify(multiplier) != FixedKind::Repelling {
                return undecided(format!(
                    "anomaly: limit {point} is not a repelling fixed point (multiplier {multiplier}); likely a lifting fault"
                ));
            }
            let Some(i) = run.fixed_labels().iter().position(|l| l == marked) else {
                return undecided(format!("unknown marked point {marked}"));
            };
            let k = tol.converged_steps.max(1).min(n);
            let mut ratios: Vec<f64> = (n - k..n)
                .map(|m| run.separation(m + 1, i, idx) / run.separation(m, i, idx))
                .collect();
            ratios.sort_by(f64::total_cmp);
            let rate = ratios[ratios.len() / 2];
            let expected = 1.0 / multiplier.norm();
            if (rate - expected).abs() > RATE_SLACK * expected {
                return undecided(format!(
                    "anomaly: decay ratio {rate} does not match 1/|g'(p)| = {expected}"
                ));
            }
            Classification::Obstructed {
                marked: marked.clone(),
                puncture: puncture.clone(),
                p: *point,
                multiplier,
                rate_estimate: rate,
                certificate: None,
            }
        }
    }
}

/// Builds the round annulus around `cluster`: centered at the cluster
/// centroid, with inner radius `(1 + margin)` times the cluster radius and
/// outer radius `(1 − margin)` times the distance to the nearest other point.
pub fn find_separating_annulus(
    config_a: &[(String, SpherePoint)],
    cluster: &[String],
    margin: f64,
    chart: &Chart,
) -> Result<RoundAnnulus> {
    let members: Vec<Complex64> = config_a
        .iter()
        .filter(|(l, _)| cluster.contains(l))
        .map(|(l, p)| {
            p.finite()
                .ok_or_else(|| Error::NoSeparatingAnnulus(format!("cluster point {l} is at the chart pole")))
        })
        .collect::<Result<_>>()?;
    if members.len() < 2 || members.len() != cluster.len() {
        return Err(Error::NoSeparatingAnnulus(
            "a cluster needs at least two points of A".into(),
        ));
    }
    let center = members.iter().sum::<Complex64>() / members.len() as f64;
    let spread = members.iter().map(|z| (z - center).norm()).fold(0.0, f64::max);
    let gap = config_a
        .iter()
        .filter(|(l, _)| !cluster.contains(l))
        .filter_map(|(_, p)| p.finite())
        .map(|z| (z - center).norm())
        .fold(f64::INFINITY, f64::min);
    let r_in = (1.0 + margin) * spread;
    let r_out = (1.0 - margin) * gap;
    if !(r_out > r_in) || !r_out.is_finite() {
        return Err(Error::NoSeparatingAnnulus(format!(
            "cluster radius {spread:e} is not below the gap {gap:e}"
        )));
    }
    RoundAnnulus::new(center, r_in, r_out, chart.to_local)
}

/// Point counts on the two sides of an annulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideCounts {
    pub inner_a: usize,
    pub outer_a: usize,
    pub inner_b: usize,
    pub outer_b: usize,
    /// Points of `A` inside the closed annulus (must be zero).
    pub on_annulus: usize,
}

pub fn side_counts(annulus: &RoundAnnulus, config_a: &[(String, SpherePoint)], b_labels: &[String]) -> SideCounts {
    let mut counts = SideCounts {
        inner_a: 0,
        outer_a: 0,
        inner_b: 0,
        outer_b: 0,
        on_annulus: 0,
    };
    for (label, p) in config_a {
        let in_b = b_labels.contains(label);
        let r = p.finite().map(|z| (z - annulus.center).norm()).unwrap_or(f64::INFINITY);
        if r < annulus.r_in {
            counts.inner_a += 1;
            counts.inner_b += in_b as usize;
        } else if r > annulus.r_out {
            counts.outer_a += 1;
            counts.outer_b += in_b as usize;
        } else {
            counts.on_annulus += 1;
        }
    }
    counts
}

/// Checks carried out on one iterate of the injectivity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateEvidence {
    pub iterate: usize,
    /// Distance from the nearest critical point to the tracked region.
    pub critical_clearance: f64,
    pub samples: usize,
    pub inner_image_simple: bool,
    pub outer_image_simple: bool,
    pub images_disjoint: bool,
    /// Relative gap between the ends of the lifted core curve.
    pub core_closure_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityEvidence {
    pub iterates: Vec<IterateEvidence>,
}

fn circle_samples(center: Complex64, r: f64, n: usize) -> Vec<Complex64> {
    Path::circle(center, r, n).nodes()[..n].to_vec()
}

fn image(lifter: &Lifter, pts: &[Complex64]) -> Option<Vec<Complex64>> {
    pts.iter()
        .map(|z| lifter.map().eval_finite(*z).map(|(v, _)| v))
        .collect()
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let (u, v) = (b - a, c - a);
    u.re * v.im - u.im * v.re
}

fn boxes_overlap(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    a.re.min(b.re) <= c.re.max(d.re)
        && c.re.min(d.re) <= a.re.max(b.re)
        && a.im.min(b.im) <= c.im.max(d.im)
        && c.im.min(d.im) <= a.im.max(b.im)
}

fn segments_cross(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    if !boxes_overlap(a, b, c, d) {
        return false;
    }
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    // touching or collinear overlap counts as crossing (conservative)
    o1 * o2 <= 0.0 && o3 * o4 <= 0.0
}

/// Normalizes a polygon to unit size around its first vertex.
fn normalized(poly: &[Complex64]) -> Vec<Complex64> {
    let origin = poly[0];
    let scale = poly.iter().map(|z| (z - origin).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return poly.to_vec();
    }
    poly.iter().map(|z| (z - origin) / scale).collect()
}

/// True when the closed polygon has no self-intersections.
pub fn polygon_is_simple(poly: &[Complex64]) -> bool {
    let p = normalized(poly);
    let n = p.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (p[i], p[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(a, b, p[j], p[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

pub fn polygons_disjoint(p: &[Complex64], q: &[Complex64]) -> bool {
    let (n, m) = (p.len(), q.len());
    for i in 0..n {
        for j in 0..m {
            if segments_cross(p[i], p[(i + 1) % n], q[j], q[(j + 1) % m]) {
                return false;
            }
        }
    }
    true
}

fn winding_number(poly: &[Complex64], z: Complex64) -> i32 {
    let n = poly.len();
    let mut w = 0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a.im <= z.im {
            if b.im > z.im && orient(a, b, z) > 0.0 {
                w += 1;
            }
        } else if b.im <= z.im && orient(a, b, z) < 0.0 {
            w -= 1;
        }
    }
    w
}

fn polygon_distance(poly: &[Complex64], z: Complex64) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| crate::lifting::segment_distance(z, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Lifts a closed curve through the branch of `g⁻¹` whose start lies near `seed`.
fn lift_near(lifter: &Lifter, curve: &Path, seed: Complex64) -> Result<(Path, f64)> {
    let start = lifter
        .solve(curve.start(), seed)
        .ok_or_else(|| Error::InjectivityUndetermined("no preimage of the core curve near the annulus".into()))?;
    let (lift, _) = lifter.lift_closed_curve(curve, start)?;
    let gap = closure_gap(&lift.lifted);
    let mut nodes = lift.lifted.nodes().to_vec();
    *nodes.last_mut().expect("nonempty") = nodes[0];
    Ok((Path::new(nodes)?, gap))
}

/// Sampled sufficient test that `g^{∘k}` is injective on `U`: for each
/// iterate the tracked region contains no critical point, both boundary
/// images are simple and disjoint, and the core curve lifts to a closed curve.
pub fn injectivity_test(lifter: &Lifter, u: &RoundAnnulus, k: usize, tol: &Tolerances) -> Result<InjectivityEvidence> {
    let samples = tol.injectivity_samples;
    let fail = |msg: String| Err(Error::InjectivityUndetermined(msg));
    let mut inner = circle_samples(u.center, u.r_in, samples);
    let mut outer = circle_samples(u.center, u.r_out, samples);
    let mut core = Path::circle(u.center, u.core_radius(), samples);
    let mut seed = u.center;
    let mut iterates = Vec::new();
    for j in 0..k {
        let clearance = lifter
            .critical_points()
            .iter()
            .map(|c| {
                if j == 0 {
                    let r = (c - u.center).norm();
                    if r < u.r_in {
                        u.r_in - r
                    } else if r > u.r_out {
                        r - u.r_out
                    } else {
                        0.0
                    }
                } else if winding_number(&outer, *c) != 0 && winding_number(&inner, *c) == 0 {
                    0.0
                } else {
                    polygon_distance(&outer, *c).min(polygon_distance(&inner, *c))
                }
            })
            .fold(f64::INFINITY, f64::min);
        if !(clearance > tol.eps_cv * u.r_out.min(1.0)) {
            return fail(format!(
                "critical point within {clearance:e} of the region at iterate {j}"
            ));
        }
        let (Some(inner_img), Some(outer_img)) = (image(lifter, &inner), image(lifter, &outer)) else {
            return fail(format!("boundary meets a pole at iterate {j}"));
        };
        let inner_simple = polygon_is_simple(&inner_img);
        let outer_simple = polygon_is_simple(&outer_img);
        let disjoint = polygons_disjoint(&inner_img, &outer_img);
        if !(inner_simple && outer_simple && disjoint) {
            return fail(format!(
                "boundary images at iterate {j}: inner simple {inner_simple}, outer simple {outer_simple}, disjoint {disjoint}"
            ));
        }
        let (lifted, gap) = lift_near(lifter, &core, seed)?;
        if !(gap < tol.eps_lift) {
            return fail(format!("core curve lift does not close at iterate {j} (gap {gap:e})"));
        }
        let _ = lifted;
        iterates.push(IterateEvidence {
            iterate: j,
            critical_clearance: clearance,
            samples,
            inner_image_simple: inner_simple,
            outer_image_simple: outer_simple,
            images_disjoint: disjoint,
            core_closure_gap: gap,
        });
        seed = core.start();
        let Some(next_core) = image(lifter, core.nodes()) else {
            return fail(format!("core curve meets a pole at iterate {j}"));
        };
        core = Path::new(next_core)?;
        inner = inner_img;
        outer = outer_img;
    }
    Ok(InjectivityEvidence { iterates })
}

/// Whether an emitted certificate also meets the stronger length threshold
/// `ℓ*·e^{−(r−1)·d₀}` for a cycle of period `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionFlag {
    pub period: usize,
    pub threshold: f64,
    pub meets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyCertificate {
    pub kind: String,
    pub engine_version: String,
    pub step: usize,
    pub chart: Chart,
    pub annulus: RoundAnnulus,
    pub cluster: Vec<String>,
    pub k: usize,
    pub d0_bound: f64,
    pub modulus: f64,
    pub threshold: f64,
    pub length_bound: f64,
    pub ell_star: f64,
    pub promotion: PromotionFlag,
    pub injectivity_evidence: InjectivityEvidence,
    pub inner_count_a: usize,
    pub inner_count_b: usize,
    pub outer_count_a: usize,
    pub outer_count_b: usize,
    /// Core circle followed by its successive degree-one lifts (chart coordinates).
    pub representative_curves: Vec<Path>,
    pub tolerances: Tolerances,
    pub trace_digest: Option<String>,
}

/// SHA-256 of a trace file, hex encoded.
pub fn trace_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `(k + 4)·π·e^{k·d₀}/ℓ*`.
pub fn modulus_threshold(k: usize, d0: f64) -> f64 {
    (k as f64 + 4.0) * PI * (k as f64 * d0).exp() / ell_star()
}

/// The chart of the marked point closest to a pinned puncture.
fn working_chart(run: &PullbackRun, n: usize) -> Chart {
    let snap = run.snapshot(n).expect("step exists");
    snap.fixed
        .iter()
        .filter(|s| s.chart.pinned.is_some())
        .min_by(|a, b| a.local.norm().total_cmp(&b.local.norm()))
        .map(|s| s.chart.clone())
        .unwrap_or_else(Chart::identity)
}

/// Single-linkage clusters of finite points at scale `r`, with at least two
/// members and at least two points left outside.
fn clusters(config: &[(String, SpherePoint)], r: f64) -> Vec<Vec<String>> {
    let finite: Vec<(usize, Complex64)> = config
        .iter()
        .enumerate()
        .filter_map(|(i, (_, p))| p.finite().map(|z| (i, z)))
        .collect();
    let mut group: Vec<usize> = (0..finite.len()).collect();
    for a in 0..finite.len() {
        for b in (a + 1)..finite.len() {
            if (finite[a].1 - finite[b].1).norm() <= r {
                let (ga, gb) = (group[a], group[b]);
                for g in group.iter_mut() {
                    if *g == gb {
                        *g = ga;
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut seen = vec![false; finite.len()];
    for a in 0..finite.len() {
        if seen[a] {
            continue;
        }
        let members: Vec<usize> = (0..finite.len()).filter(|&b| group[b] == group[a]).collect();
        for &b in &members {
            seen[b] = true;
        }
        if members.len() >= 2 && members.len() + 2 <= config.len() {
            out.push(members.iter().map(|&b| config[finite[b].0].0.clone()).collect());
        }
    }
    out
}

fn representative_curves(lifter: &Lifter, u: &RoundAnnulus, k: usize, tol: &Tolerances) -> Result<Vec<Path>> {
    let mut curves = vec![Path::circle(u.center, u.core_radius(), tol.injectivity_samples)];
    let mut seed = u.center;
    for _ in 0..k {
        let current = curves.last().expect("nonempty");
        let (lifted, gap) = lift_near(lifter, current, seed)?;
        if !(gap < tol.eps_lift) {
            return Err(Error::InjectivityUndetermined(format!(
                "lift of a representative curve does not close (gap {gap:e})"
            )));
        }
        seed = lifted.start();
        curves.push(lifted);
    }
    Ok(curves)
}

/// Tries to certify a Levy multicurve at step `n` of a run.
pub fn emit_levy_certificate(run: &PullbackRun, n: usize, digest: Option<&str>) -> Result<Option<LevyCertificate>> {
    if n > run.step() || run.step() < 1 {
        return Err(Error::InvalidRun(format!("step {n} is not available")));
    }
    let tol = run.tolerances();
    let a_size = run.base().len() + run.marked_count();
    if a_size < 4 {
        return Ok(None);
    }
    let k = a_size - 3;
    let d0 = teich_step_bound(run, 1)?;
    let threshold = modulus_threshold(k, d0);
    let chart = working_chart(run, n);
    let config = run.a_configuration_in(n, &chart);
    let b_labels: Vec<String> = run.base().labels().map(String::from).collect();
    let finite: Vec<Complex64> = config.iter().filter_map(|(_, p)| p.finite()).collect();
    let diameter = finite
        .iter()
        .flat_map(|a| finite.iter().map(move |b| (a - b).norm()))
        .fold(0.0, f64::max);
    let r_cluster = 2.0 * diameter * (-2.0 * PI * threshold).exp();
    let lifter = run.local_lifter(&chart)?;

    for cluster in clusters(&config, r_cluster) {
        let Ok(mut annulus) = find_separating_annulus(&config, &cluster, tol.annulus_margin, &chart) else {
            continue;
        };
        let nearest_critical = lifter
            .critical_points()
            .iter()
            .map(|c| (c - annulus.center).norm())
            .fold(f64::INFINITY, f64::min);
        if nearest_critical > annulus.r_in && nearest_critical <= annulus.r_out {
            let r_out = SHRINK * nearest_critical;
            match RoundAnnulus::new(annulus.center, annulus.r_in, r_out, annulus.chart) {
                Ok(a) => annulus = a,
                Err(_) => continue,
            }
        }
        let counts = side_counts(&annulus, &config, &b_labels);
        if counts.inner_a < 2 || counts.outer_a < 2 || counts.inner_b > 1 || counts.on_annulus > 0 {
            continue;
        }
        let modulus = annulus.modulus();
        if !(modulus > threshold) {
            continue;
        }
        let Ok(evidence) = injectivity_test(&lifter, &annulus, k, tol) else {
            continue;
        };
        let Ok(curves) = representative_curves(&lifter, &annulus, k, tol) else {
            continue;
        };
        let length_bound = (k as f64 + 4.0) * PI * (k as f64 * d0).exp() / modulus;
        let period = cluster
            .iter()
            .filter_map(|l| run.base().labels().position(|b| b == l))
            .find_map(|i| run.analysis().period_of(i))
            .unwrap_or(1);
        let promoted = ell_star() * (-((period as f64) - 1.0) * d0).exp();
        return Ok(Some(LevyCertificate {
            kind: "numerical evidence".into(),
            engine_version: ENGINE_VERSION.into(),
            step: n,
            chart: chart.clone(),
            annulus,
            cluster,
            k,
            d0_bound: d0,
            modulus,
            threshold,
            length_bound,
            ell_star: ell_star(),
            promotion: PromotionFlag {
                period,
                threshold: promoted,
                meets: length_bound < promoted,
            },
            injectivity_evidence: evidence,
            inner_count_a: counts.inner_a,
            inner_count_b: counts.inner_b,
            outer_count_a: counts.outer_a,
            outer_count_b: counts.outer_b,
            representative_curves: curves,
            tolerances: *tol,
            trace_digest: digest.map(String::from),
        }));
    }
    Ok(None)
}

/// The first step in `1..=run.step()` at which a certificate is emitted.
pub fn first_certificate(run: &PullbackRun, digest: Option<&str>) -> Result<Option<LevyCertificate>> {
    for n in 1..=run.step() {
        if let Some(cert) = emit_levy_certificate(run, n, digest)? {
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub mismatches: Vec<String>,
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Recomputes every quantity of a certificate against the run it refers to.
/// When `digest` is given it must match the recorded trace digest.
pub fn verify_certificate(cert: &LevyCertificate, run: &PullbackRun, digest: Option<&str>) -> VerifyReport {
    let mut bad: Vec<String> = Vec::new();
    let tol = run.tolerances();
    if let Some(d) = digest {
        if cert.trace_digest.as_deref() != Some(d) {
            bad.push("trace digest does not match".into());
        }
    }
    if cert.step > run.step() || cert.step == 0 {
        bad.push(format!("step {} is not in the run", cert.step));
        return VerifyReport {
            ok: false,
            mismatches: bad,
        };
    }
    let k = run.base().len() + run.marked_count() - 3;
    if cert.k != k {
        bad.push(format!("k = {} but |A| − 3 = {k}", cert.k));
    }
    match teich_step_bound(run, 1) {
        Ok(d0) if rel_close(d0, cert.d0_bound, RECOMPUTE_REL) => {}
        Ok(d0) => bad.push(format!("d0 bound {} differs from recomputed {d0}", cert.d0_bound)),
        Err(e) => bad.push(format!("d0 bound not recomputable: {e}")),
    }
    let threshold = modulus_threshold(cert.k, cert.d0_bound);
    if !rel_close(threshold, cert.threshold, RECOMPUTE_REL) {
        bad.push(format!(
            "threshold {} differs from recomputed {threshold}",
            cert.threshold
        ));
    }
    let modulus = cert.annulus.modulus();
    if !rel_close(modulus, cert.modulus, RECOMPUTE_REL) {
        bad.push(format!("modulus {} differs from recomputed {modulus}", cert.modulus));
    }
    if !(modulus > threshold) {
        bad.push(format!("modulus {modulus} does not exceed the threshold {threshold}"));
    }
    let length_bound = (cert.k as f64 + 4.0) * PI * (cert.k as f64 * cert.d0_bound).exp() / modulus;
    if !rel_close(length_bound, cert.length_bound, RECOMPUTE_REL) || !(length_bound < ell_star()) {
        bad.push(format!(
            "length bound {} is inconsistent or not below ℓ*",
            cert.length_bound
        ));
    }
    if cert.ell_star != ell_star() {
        bad.push("ℓ* differs".into());
    }
    if cert.annulus.chart != cert.chart.to_local {
        bad.push("annulus chart differs from the certificate chart".into());
    }
    let config = run.a_configuration_in(cert.step, &cert.chart);
    let b_labels: Vec<String> = run.base().labels().map(String::from).collect();
    let counts = side_counts(&cert.annulus, &config, &b_labels);
    let stored = (
        cert.inner_count_a,
        cert.outer_count_a,
        cert.inner_count_b,
        cert.outer_count_b,
    );
    if stored != (counts.inner_a, counts.outer_a, counts.inner_b, counts.outer_b) {
        bad.push(format!("side counts {stored:?} differ from recomputed {counts:?}"));
    }
    if counts.inner_a < 2 || counts.outer_a < 2 || counts.inner_b > 1 || counts.on_annulus > 0 {
        bad.push(format!(
            "side counts {counts:?} violate the essential/non-essential conditions"
        ));
    }
    let lifter = match run.local_lifter(&cert.chart) {
        Ok(l) => l,
        Err(e) => {
            bad.push(format!("chart map unavailable: {e}"));
            return VerifyReport {
                ok: false,
                mismatches: bad,
            };
        }
    };
    if let Err(e) = injectivity_test(&lifter, &cert.annulus, cert.k, tol) {
        bad.push(format!("injectivity test failed: {e}"));
    }
    let curves = &cert.representative_curves;
    if curves.len() != cert.k + 1 {
        bad.push(format!("{} representative curves for k = {}", curves.len(), cert.k));
    } else {
        let core = Path::circle(cert.annulus.center, cert.annulus.core_radius(), curves[0].len() - 1);
        let scale = cert.annulus.core_radius();
        if core.len() != curves[0].len()
            || core
                .nodes()
                .iter()
                .zip(curves[0].nodes())
                .any(|(a, b)| (a - b).norm() > CURVE_REL * scale)
        {
            bad.push("first representative curve is not the core circle".into());
        }
        for i in 0..cert.k {
            let (down, up) = (&curves[i], &curves[i + 1]);
            match lifter.lift_closed_curve(down, up.start()) {
                Ok((lift, closes)) => {
                    let scale = up.diameter().max(f64::MIN_POSITIVE);
                    let same = lift.lifted.len() == up.len()
                        && lift
                            .lifted
                            .nodes()
                            .iter()
                            .zip(up.nodes())
                            .all(|(a, b)| (a - b).norm() <= CURVE_REL * scale);
                    if !closes || !same {
                        bad.push(format!("curve {} is not a closed degree-one lift of curve {i}", i + 1));
                    }
                }
                Err(e) => bad.push(format!("curve {} does not lift: {e}", i + 1)),
            }
        }
    }
    VerifyReport {
        ok: bad.is_empty(),
        mismatches: bad,
    }
}

/// A curve with certified hyperbolic length below ℓ*.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortCurve {
    pub step: usize,
    pub cluster: Vec<String>,
    pub length_bound: f64,
}

/// Short curves reported for one run; distinct entries never exceed `|A| − 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortGeodesicReport {
    pub budget: usize,
    pub entries: Vec<ShortCurve>,
}

impl ShortGeodesicReport {
    pub fn new(budget: usize, entries: Vec<ShortCurve>) -> Result<Self> {
        let mut distinct: Vec<Vec<String>> = Vec::new();
        for e in &entries {
            if !(e.length_bound < ell_star()) {
                return Err(Error::InvalidRun(format!(
                    "curve bound {} is not below ℓ*",
                    e.length_bound
                )));
            }
            let mut key = e.cluster.clone();
            key.sort();
            if !distinct.contains(&key) {
                distinct.push(key);
            }
        }
        if distinct.len() > budget {
            return Err(Error::InvalidRun(format!(
                "{} distinct short curves exceed the budget {budget}",
                distinct.len()
            )));
        }
        Ok(ShortGeodesicReport { budget, entries })
    }
}
