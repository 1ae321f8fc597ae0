//! Continuation of inverse branches of `g` along polylines.
//!
//! A lift is built node by node: each new lift node solves `g(w) = target`
//! by Newton's method seeded at the previous lift node. A step is accepted
//! only when the solution moved less than `η` times the distance from the
//! seed to the nearest critical point, so that the seed and the solution lie
//! in one disk on which the branch is univalent. Rejected steps are bisected.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratmap::RationalMap;
use crate::sphere::{complex_vec_serde, SpherePoint};
use crate::tolerances::Tolerances;

/// Residual accepted when Newton stalls at roundoff.
const STALL_RESIDUAL: f64 = 1e-13;
const NEWTON_ITERS: usize = 80;

/// A polyline in a finite chart. Consecutive nodes are distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path {
    #[serde(with = "complex_vec_serde")]
    nodes: Vec<Complex64>,
}

impl Path {
    pub fn new(nodes: Vec<Complex64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidPath("no nodes".into()));
        }
        if nodes.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidPath("non-finite node".into()));
        }
        let mut out: Vec<Complex64> = Vec::with_capacity(nodes.len());
        for z in nodes {
            if out.last() != Some(&z) {
                out.push(z);
            }
        }
        Ok(Path { nodes: out })
    }

    /// The constant path at `z`.
    pub fn point(z: Complex64) -> Self {
        Path { nodes: vec![z] }
    }

    pub fn segment(a: Complex64, b: Complex64) -> Self {
        Path::new(vec![a, b]).expect("finite endpoints")
    }

    /// The circle `|z − center| = radius` traversed once counterclockwise from
    /// `center + radius`, as a closed polygon with `n` sides.
    pub fn circle(center: Complex64, radius: f64, n: usize) -> Self {
        let mut nodes: Vec<Complex64> = (0..n)
            .map(|j| center + Complex64::from_polar(radius, std::f64::consts::TAU * j as f64 / n as f64))
            .collect();
        nodes.push(nodes[0]);
        Path { nodes }
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start(&self) -> Complex64 {
        self.nodes[0]
    }

    pub fn end(&self) -> Complex64 {
        *self.nodes.last().expect("nonempty path")
    }

    pub fn is_closed(&self) -> bool {
        self.nodes.len() > 1 && self.start() == self.end()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn reverse(&self) -> Path {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        Path { nodes }
    }

    /// Applies `f` to every node.
    pub fn map_nodes(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Path> {
        Path::new(self.nodes.iter().map(|z| f(*z)).collect())
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// Minimum Euclidean distance from the polyline to any of `points`.
    pub fn clearance(&self, points: &[Complex64]) -> f64 {
        let mut best = f64::INFINITY;
        for q in points {
            if self.nodes.len() == 1 {
                best = best.min((self.nodes[0] - q).norm());
            }
            for (a, b) in self.segments() {
                best = best.min(segment_distance(*q, a, b));
            }
        }
        best
    }
}

/// Joins two paths; `p2` must start where `p1` ends (chordally within `eps`).
pub fn concatenate(p1: &Path, p2: &Path, eps: f64) -> Result<Path> {
    let gap = SpherePoint::Finite(p1.end()).chordal(&SpherePoint::Finite(p2.start()));
    if gap > eps {
        return Err(Error::EndpointMismatch(gap));
    }
    let mut nodes = p1.nodes.clone();
    nodes.extend_from_slice(&p2.nodes[1..]);
    Path::new(nodes)
}

pub fn reverse(p: &Path) -> Path {
    p.reverse()
}

/// Distance from `q` to the segment `[a, b]`.
pub fn segment_distance(q: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (q - a).norm();
    }
    let t = ((q - a) * ab.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (q - (a + ab * t)).norm()
}

fn cross(u: Complex64, v: Complex64) -> f64 {
    u.re * v.im - u.im * v.re
}

/// Distance from `q` to the closed triangle `abc` (zero inside).
pub fn triangle_distance(q: Complex64, a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let d1 = cross(b - a, q - a);
    let d2 = cross(c - b, q - b);
    let d3 = cross(a - c, q - c);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    if !(has_neg && has_pos) && cross(b - a, c - a) != 0.0 {
        return 0.0;
    }
    segment_distance(q, a, b)
        .min(segment_distance(q, b, c))
        .min(segment_distance(q, c, a))
}

/// Removes nodes whose corridor triangle `(prev, node, next)` stays clear of
/// every obstacle by a margin of `2·eps_clear` times the triangle size. This
/// keeps the endpoints and the homotopy class in the complement of the
/// obstacles.
pub fn simplify(path: &Path, obstacles: &[Complex64], eps_clear: f64) -> Path {
    let mut nodes = path.nodes.clone();
    let mut changed = true;
    while changed {
        changed = false;
        let mut i = 1;
        while i + 1 < nodes.len() {
            let (a, b, c) = (nodes[i - 1], nodes[i], nodes[i + 1]);
            let size = (a - b).norm().max((b - c).norm()).max((a - c).norm());
            let margin = 2.0 * eps_clear * size;
            if obstacles.iter().all(|q| triangle_distance(*q, a, b, c) > margin) {
                nodes.remove(i);
                if nodes[i - 1] == nodes[i] {
                    if i + 1 < nodes.len() {
                        nodes.remove(i);
                    } else {
                        nodes.remove(i - 1);
                    }
                }
                changed = true;
            } else {
                i += 1;
            }
        }
    }
    Path { nodes }
}

/// A lift together with its quality data.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftResult {
    pub lifted: Path,
    /// Downstairs point for every lifted node (input nodes plus subdivision points).
    pub targets: Vec<Complex64>,
    /// Largest chordal `|g(w) − target|` over the lifted nodes.
    pub max_residual: f64,
    pub subdivisions: usize,
}

/// Critical data of a map cached for repeated lifting.
#[derive(Debug, Clone)]
pub struct Lifter {
    map: RationalMap,
    critical_points: Vec<Complex64>,
    critical_values: Vec<Complex64>,
    at_puncture: Vec<bool>,
    tol: Tolerances,
}

impl Lifter {
    pub fn new(map: &RationalMap, tol: &Tolerances) -> Result<Self> {
        let crit = map.critical_points()?;
        let critical_points: Vec<Complex64> = crit.iter().filter_map(|c| c.point.finite()).collect();
        let critical_values: Vec<Complex64> = crit.iter().filter_map(|c| map.eval(c.point).finite()).collect();
        Ok(Lifter {
            map: map.clone(),
            critical_points,
            at_puncture: vec![false; critical_values.len()],
            critical_values,
            tol: *tol,
        })
    }

    /// Replaces critical values within `eps` of a puncture by the puncture.
    /// Clearance to such values is then measured relative to the distance
    /// from the path endpoints, since fiber paths end arbitrarily close to
    /// the punctures they converge to.
    pub fn snap_critical_values(mut self, anchors: &[Complex64], eps: f64) -> Self {
        for (v, flag) in self.critical_values.iter_mut().zip(&mut self.at_puncture) {
            if let Some(a) = anchors.iter().find(|a| (*v - **a).norm() <= eps) {
                *v = *a;
                *flag = true;
            }
        }
        self
    }

    pub fn map(&self) -> &RationalMap {
        &self.map
    }

    pub fn critical_points(&self) -> &[Complex64] {
        &self.critical_points
    }

    pub fn critical_values(&self) -> &[Complex64] {
        &self.critical_values
    }

    fn critical_distance(&self, w: Complex64) -> f64 {
        self.critical_points
            .iter()
            .map(|c| (w - c).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn residual(&self, w: Complex64, target: Complex64) -> f64 {
        self.map
            .eval(SpherePoint::Finite(w))
            .chordal(&SpherePoint::Finite(target))
    }

    /// Newton's method for `g(w) = target` from `seed`.
    pub fn solve(&self, target: Complex64, seed: Complex64) -> Option<Complex64> {
        let mut w = seed;
        for _ in 0..NEWTON_ITERS {
            let (v, dv) = self.map.eval_finite(w)?;
            let h = v - target;
            if h.norm() == 0.0 {
                return Some(w);
            }
            if dv.norm() == 0.0 {
                return None;
            }
            let step = h / dv;
            w -= step;
            if !(w.re.is_finite() && w.im.is_finite()) {
                return None;
            }
            if step.norm() <= 4.0 * f64::EPSILON * w.norm() {
                return Some(w);
            }
        }
        // stalled at roundoff without meeting the step criterion
        (self.residual(w, target) <= STALL_RESIDUAL).then_some(w)
    }

    fn check_path(&self, path: &Path) -> Result<()> {
        for (v, at_puncture) in self.critical_values.iter().zip(&self.at_puncture) {
            let clearance = path.clearance(std::slice::from_ref(v));
            // a puncture is approached by design; only passing close to it counts
            let scale = if *at_puncture {
                (path.start() - v).norm().min((path.end() - v).norm()).min(1.0)
            } else {
                1.0
            };
            if clearance < self.tol.eps_cv * scale {
                return Err(Error::NearCriticalValue {
                    value: SpherePoint::Finite(*v),
                    clearance,
                });
            }
        }
        Ok(())
    }

    /// Lifts `path` through the branch of `g⁻¹` taking `path.start()` to `start_lift`.
    pub fn lift_path(&self, path: &Path, start_lift: Complex64) -> Result<LiftResult> {
        let start_residual = self.residual(start_lift, path.start());
        if !(start_residual < self.tol.eps_lift) {
            return Err(Error::BadStartLift(start_residual));
        }
        self.check_path(path)?;
        let mut lifted = vec![start_lift];
        let mut targets = vec![path.start()];
        let mut subdivisions = 0;
        let mut max_residual = start_residual;
        for (segment, (a, b)) in path.segments().enumerate() {
            // stack of pending targets, processed last-in first-out
            let mut pending: Vec<(Complex64, Complex64, usize)> = vec![(a, b, 0)];
            while let Some((from, to, depth)) = pending.pop() {
                let seed = *lifted.last().expect("nonempty lift");
                let radius = self.tol.eta * self.critical_distance(seed);
                let accepted = self.solve(to, seed).and_then(|w| {
                    let residual = self.residual(w, to);
                    ((w - seed).norm() < radius && residual < self.tol.eps_lift).then_some((w, residual))
                });
                match accepted {
                    Some((w, residual)) => {
                        lifted.push(w);
                        targets.push(to);
                        max_residual = max_residual.max(residual);
                    }
                    None => {
                        if depth >= self.tol.max_subdivision_depth {
                            return Err(Error::BranchJumpSuspected { segment, depth });
                        }
                        subdivisions += 1;
                        let mid = from + (to - from) * 0.5;
                        pending.push((mid, to, depth + 1));
                        pending.push((from, mid, depth + 1));
                    }
                }
            }
        }
        let lifted = Path::new(lifted)?;
        if lifted.len() != targets.len() {
            // a repeated lift node means two targets coincided; keep them aligned
            return Err(Error::InvalidPath("lift collapsed consecutive nodes".into()));
        }
        Ok(LiftResult {
            lifted,
            targets,
            max_residual,
            subdivisions,
        })
    }

    /// Lifts a closed loop; the second value is true when the lift closes.
    pub fn lift_closed_curve(&self, lp: &Path, start_lift: Complex64) -> Result<(LiftResult, bool)> {
        if !lp.is_closed() {
            return Err(Error::InvalidPath("loop is not closed".into()));
        }
        let result = self.lift_path(lp, start_lift)?;
        let closes = closure_gap(&result.lifted) < self.tol.eps_lift;
        Ok((result, closes))
    }

    /// Worst residual of the lift when evaluated at `factor` points per lifted
    /// segment, continuing from the chord between lifted nodes.
    pub fn refined_residual(&self, lift: &LiftResult, factor: usize) -> f64 {
        let nodes = lift.lifted.nodes();
        let mut worst: f64 = 0.0;
        for i in 0..nodes.len().saturating_sub(1) {
            let (w0, w1) = (nodes[i], nodes[i + 1]);
            let (t0, t1) = (lift.targets[i], lift.targets[i + 1]);
            for s in 1..factor {
                let u = s as f64 / factor as f64;
                let seed = w0 + (w1 - w0) * u;
                let target = t0 + (t1 - t0) * u;
                match self.solve(target, seed) {
                    Some(w) if (w - seed).norm() <= (w1 - w0).norm() => {
                        worst = worst.max(self.residual(w, target));
                    }
                    _ => return f64::INFINITY,
                }
            }
        }
        worst
    }
}

/// Gap between the ends of a lifted loop relative to its size.
pub fn closure_gap(lifted: &Path) -> f64 {
    let scale = lifted.diameter().max(f64::MIN_POSITIVE);
    (lifted.end() - lifted.start()).norm() / scale
}

pub fn lift_path(g: &RationalMap, path: &Path, start_lift: Complex64, tol: &Tolerances) -> Result<LiftResult> {
    Lifter::new(g, tol)?.lift_path(path, start_lift)
}

pub fn lift_closed_curve(
    g: &RationalMap,
    lp: &Path,
    start_lift: Complex64,
    tol: &Tolerances,
) -> Result<(LiftResult, bool)> {
    Lifter::new(g, tol)?.lift_closed_curve(lp, start_lift)
}
