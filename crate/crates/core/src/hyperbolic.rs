//! Annulus moduli and one-sided (upper) bounds on hyperbolic quantities of
//! punctured spheres.
//!
//! The density of `Ĉ − P` at `z` is bounded above by the density of any
//! punctured disk `D(p, R) − {p}` inside `Ĉ − P` that contains `z`; for that
//! disk the density is `1/(d·log(R/d))` with `d = |z − p|` (curvature −1).

use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::PullbackRun;
use crate::lifting::{segment_distance, Path};
use crate::sphere::{Configuration, MobiusTransform, SpherePoint};

/// Relative excess of the upper sum at which integration stops.
const REFINE_REL: f64 = 0.01;
const MAX_PIECES: usize = 1 << 16;

/// A piece of an integration partition, ordered by its excess.
struct Piece {
    u: Complex64,
    v: Complex64,
    upper: f64,
    excess: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.excess.total_cmp(&other.excess).is_eq()
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.excess.total_cmp(&other.excess)
    }
}

/// Short-geodesic threshold `log(3 + 2√2)`: two distinct simple closed
/// geodesics shorter than this are disjoint.
pub fn ell_star() -> f64 {
    (3.0 + 2.0 * 2f64.sqrt()).ln()
}

/// `r_in < |z − center| < r_out` in the coordinates of `chart`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundAnnulus {
    #[serde(with = "crate::sphere::complex_serde")]
    pub center: Complex64,
    pub r_in: f64,
    pub r_out: f64,
    /// Maps original coordinates to the coordinates the annulus is round in.
    pub chart: MobiusTransform,
}

impl RoundAnnulus {
    pub fn new(center: Complex64, r_in: f64, r_out: f64, chart: MobiusTransform) -> Result<Self> {
        if !(r_in > 0.0 && r_out > r_in && r_out.is_finite()) {
            return Err(Error::NoSeparatingAnnulus(format!(
                "radii {r_in:e} < {r_out:e} do not bound an annulus"
            )));
        }
        Ok(RoundAnnulus {
            center,
            r_in,
            r_out,
            chart,
        })
    }

    pub fn modulus(&self) -> f64 {
        annulus_modulus(self)
    }

    pub fn core_radius(&self) -> f64 {
        (self.r_in * self.r_out).sqrt()
    }

    /// Image under an affine change of coordinates `z ↦ αz + β`; `None` when
    /// `m` is not affine.
    pub fn transported(&self, m: &MobiusTransform) -> Option<RoundAnnulus> {
        if m.c.norm() != 0.0 {
            return None;
        }
        let scale = (m.a / m.d).norm();
        Some(RoundAnnulus {
            center: m.apply_finite(self.center)?,
            r_in: self.r_in * scale,
            r_out: self.r_out * scale,
            chart: m.compose(&self.chart),
        })
    }
}

pub fn annulus_modulus(a: &RoundAnnulus) -> f64 {
    (a.r_out / a.r_in).ln() / TAU
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBound {
    pub value: f64,
    pub kind: BoundKind,
    pub subject: String,
}

impl LengthBound {
    pub fn upper(value: f64, subject: impl Into<String>) -> Self {
        LengthBound {
            value,
            kind: BoundKind::Upper,
            subject: subject.into(),
        }
    }
}

/// Length of the core geodesic of an annulus of modulus `modulus`, which
/// bounds the core geodesic of any hyperbolic surface containing it essentially.
pub fn geodesic_length_bound(modulus: f64) -> LengthBound {
    LengthBound::upper(PI / modulus, "annulus core curve")
}

/// Punctured-disk comparison domains `D(p, R_p) − {p}` for a finite set of
/// punctures, `R_p` being the distance to the nearest other puncture.
#[derive(Debug, Clone)]
pub struct DensityBound {
    disks: Vec<(Complex64, f64)>,
}

fn disk_density(d: f64, r: f64) -> f64 {
    1.0 / (d * (r / d).ln())
}

impl DensityBound {
    pub fn new(punctures: &[Complex64]) -> Self {
        let disks = punctures
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let r = punctures
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (p - q).norm())
                    .fold(f64::INFINITY, f64::min);
                r.is_finite().then_some((*p, r))
            })
            .collect();
        DensityBound { disks }
    }

    pub fn from_configuration(config: &Configuration) -> Self {
        let finite: Vec<Complex64> = config.points().filter_map(|p| p.finite()).collect();
        DensityBound::new(&finite)
    }

    pub fn at(&self, z: Complex64) -> Result<f64> {
        let best = self
            .disks
            .iter()
            .filter_map(|(p, r)| {
                let d = (z - p).norm();
                (d > 0.0 && d < *r).then(|| disk_density(d, *r))
            })
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::NoApplicableComparison(SpherePoint::Finite(z)))
        }
    }

    /// Upper bound for the density on the segment `[a, b]`, or ∞ when no
    /// comparison disk contains the whole segment.
    fn segment_sup(&self, a: Complex64, b: Complex64) -> f64 {
        self.disks
            .iter()
            .filter_map(|(p, r)| {
                let d_max = (a - p).norm().max((b - p).norm());
                let d_min = segment_distance(*p, a, b);
                // 1/(d log(R/d)) is decreasing then increasing on (0, R)
                (d_min > 0.0 && d_max < *r).then(|| disk_density(d_min, *r).max(disk_density(d_max, *r)))
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Upper Riemann sum of the comparison density along `[a, b]`. Pieces
    /// are bisected, largest excess over the midpoint value first, until
    /// the total excess is within 1% of the sum. Every partition gives an
    /// upper bound and bisection never increases it.
    pub fn segment_length(&self, a: Complex64, b: Complex64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        self.at(a)?;
        self.at(b)?;
        let piece = |u: Complex64, v: Complex64| {
            let len = (v - u).norm();
            let upper = self.segment_sup(u, v) * len;
            let mid = self.at((u + v) * 0.5).unwrap_or(f64::INFINITY) * len;
            let excess = if upper.is_finite() {
                upper - mid.min(upper)
            } else {
                f64::INFINITY
            };
            Piece { u, v, upper, excess }
        };
        let mut heap = BinaryHeap::new();
        let first = piece(a, b);
        let (mut total, mut excess) = (first.upper, first.excess);
        heap.push(first);
        while !(total.is_finite() && excess <= REFINE_REL * total) && heap.len() < MAX_PIECES {
            let worst = heap.pop().expect("nonempty");
            let m = (worst.u + worst.v) * 0.5;
            if m == worst.u || m == worst.v {
                heap.push(worst);
                break;
            }
            let (left, right) = (piece(worst.u, m), piece(m, worst.v));
            if worst.upper.is_finite() {
                total += left.upper + right.upper - worst.upper;
                excess += left.excess + right.excess - worst.excess;
            } else {
                total = heap.iter().map(|p| p.upper).sum::<f64>() + left.upper + right.upper;
                excess = heap.iter().map(|p| p.excess).sum::<f64>() + left.excess + right.excess;
            }
            heap.push(left);
            heap.push(right);
        }
        // recompute to shed accumulated rounding in the running sums
        let total: f64 = heap.iter().map(|p| p.upper).sum();
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::NoApplicableComparison(SpherePoint::Finite((a + b) * 0.5)))
        }
    }

    pub fn path_length(&self, path: &Path) -> Result<f64> {
        path.segments().map(|(a, b)| self.segment_length(a, b)).sum()
    }
}

/// Upper bound for the hyperbolic density of `Ĉ − P` at `z` (finite
/// punctures of `P` only).
pub fn density_upper_bound(p: &Configuration, z: Complex64) -> Result<f64> {
    DensityBound::from_configuration(p).at(z)
}

/// Upper bound for the hyperbolic length of `path` in `Ĉ − P`.
pub fn path_length_upper_bound(p: &Configuration, path: &Path) -> Result<LengthBound> {
    let value = DensityBound::from_configuration(p).path_length(path)?;
    Ok(LengthBound::upper(value, "path"))
}

/// Upper bound for the Teichmüller distance between the fiber points at
/// steps `n − 1` and `n` of a run (`n ≥ 1`). With the first fiber point
/// counted as `τ₁`, this bounds `d_T(τ_n, τ_{n+1})`.
pub fn teich_step_bound(run: &PullbackRun, n: usize) -> Result<f64> {
    run.step_bound(n)
}
