//! The realized base map `g`: evaluation on the sphere, critical points,
//! postsingular analysis, fixed points and preimages.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::sphere::{complex_vec_serde, Configuration, MobiusTransform, SpherePoint};
use crate::tolerances::Tolerances;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Relative size below which a leading coefficient is treated as cancelled.
const TRIM_REL: f64 = 1e-13;
/// Chordal distance within which a cycle point must be hit for the orbit to
/// count as landing on the cycle rather than accumulating on it.
const LANDING_TOL: f64 = 1e-11;
const CYCLE_NEWTON_ITERS: usize = 60;
const MULTIPLIER_TOL: f64 = 1e-9;

/// `g = N/D` with coprime numerator and denominator and degree ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMap {
    numerator: Polynomial,
    denominator: Polynomial,
    degree: usize,
}

#[derive(Serialize, Deserialize)]
struct RationalMapWire {
    #[serde(with = "complex_vec_serde")]
    numerator: Vec<Complex64>,
    #[serde(with = "complex_vec_serde")]
    denominator: Vec<Complex64>,
}

impl Serialize for RationalMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RationalMapWire {
            numerator: self.numerator.coeffs().to_vec(),
            denominator: self.denominator.coeffs().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = RationalMapWire::deserialize(d)?;
        RationalMap::new(
            Polynomial::new(wire.numerator),
            Polynomial::new(wire.denominator),
            &Tolerances::default(),
        )
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: SpherePoint,
    pub local_degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedKind {
    Superattracting,
    Attracting,
    Indifferent,
    Repelling,
}

impl FixedKind {
    pub fn classify(multiplier: Complex64) -> Self {
        let r = multiplier.norm();
        if r <= MULTIPLIER_TOL {
            FixedKind::Superattracting
        } else if r < 1.0 - MULTIPLIER_TOL {
            FixedKind::Attracting
        } else if r > 1.0 + MULTIPLIER_TOL {
            FixedKind::Repelling
        } else {
            FixedKind::Indifferent
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointData {
    pub location: SpherePoint,
    #[serde(with = "crate::sphere::complex_serde")]
    pub multiplier: Complex64,
    pub kind: FixedKind,
    pub multiplicity: usize,
    pub in_p: bool,
}

/// Preperiod and cycle length of one critical value's forward orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitPortrait {
    pub value: SpherePoint,
    pub label: String,
    pub preperiod: usize,
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostsingularAnalysis {
    pub critical_points: Vec<CriticalPoint>,
    pub critical_values: Vec<SpherePoint>,
    /// The marked base set: postsingular points plus any declared invariant points.
    pub postsingular: Configuration,
    /// `image[i]` is the index in `postsingular` of `g(postsingular[i])`.
    pub image: Vec<usize>,
    /// Points that were declared rather than produced by critical orbits.
    pub declared: Vec<bool>,
    pub portrait: Vec<OrbitPortrait>,
    pub is_psf: bool,
}

impl PostsingularAnalysis {
    pub fn index_of(&self, z: &SpherePoint, eps: f64) -> Option<usize> {
        self.postsingular.nearest(z).filter(|(_, d)| *d <= eps).map(|(i, _)| i)
    }

    /// Period of a point of the base set under `g`, if it is periodic.
    pub fn period_of(&self, index: usize) -> Option<usize> {
        let mut j = self.image[index];
        for step in 1..=self.image.len() {
            if j == index {
                return Some(step);
            }
            j = self.image[j];
        }
        None
    }
}

impl RationalMap {
    pub fn new(numerator: Polynomial, denominator: Polynomial, tol: &Tolerances) -> Result<Self> {
        if denominator.is_zero() {
            return Err(Error::InvalidMap("zero denominator".into()));
        }
        if numerator.is_zero() {
            return Err(Error::InvalidMap("constant map".into()));
        }
        let degree = numerator.degree().unwrap().max(denominator.degree().unwrap());
        if degree < 2 {
            return Err(Error::InvalidMap(format!("degree {degree} < 2")));
        }
        let map = RationalMap {
            numerator,
            denominator,
            degree,
        };
        map.check_coprime(tol)?;
        Ok(map)
    }

    /// A polynomial map from ascending coefficients.
    pub fn polynomial(coeffs: Vec<Complex64>) -> Result<Self> {
        RationalMap::new(
            Polynomial::new(coeffs),
            Polynomial::constant(ONE),
            &Tolerances::default(),
        )
    }

    /// `z² + c`.
    pub fn quadratic(c: Complex64) -> Self {
        RationalMap::polynomial(vec![c, ZERO, ONE]).expect("quadratic family is valid")
    }

    fn check_coprime(&self, tol: &Tolerances) -> Result<()> {
        let (small, other) = if self.denominator.degree() <= self.numerator.degree() {
            (&self.denominator, &self.numerator)
        } else {
            (&self.numerator, &self.denominator)
        };
        if small.degree() == Some(0) {
            return Ok(());
        }
        for r in small.roots_flat()? {
            let rel = other.eval(r).norm() / other.magnitude_at(r);
            if rel <= tol.eps_det {
                return Err(Error::InvalidMap(format!(
                    "numerator and denominator share the root {r}"
                )));
            }
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn numerator(&self) -> &Polynomial {
        &self.numerator
    }

    pub fn denominator(&self) -> &Polynomial {
        &self.denominator
    }

    pub fn is_polynomial(&self) -> bool {
        self.denominator.degree() == Some(0)
    }

    /// Evaluation at a finite point with the affine derivative; `None` at poles.
    pub fn eval_finite(&self, z: Complex64) -> Option<(Complex64, Complex64)> {
        let (n, dn) = self.numerator.eval_with_derivative(z);
        let (d, dd) = self.denominator.eval_with_derivative(z);
        if d == ZERO {
            return None;
        }
        let value = n / d;
        if !(value.re.is_finite() && value.im.is_finite()) {
            return None;
        }
        Some((value, (dn * d - n * dd) / (d * d)))
    }

    pub fn eval(&self, z: SpherePoint) -> SpherePoint {
        self.eval_with_derivative(z).0
    }

    /// `g(z)` and the derivative in the affine charts at `z` and `g(z)`
    /// (`w = 1/z` wherever the point is ∞).
    pub fn eval_with_derivative(&self, z: SpherePoint) -> (SpherePoint, Complex64) {
        let d = self.degree;
        match z {
            SpherePoint::Finite(z) => {
                if let Some((v, dv)) = self.eval_finite(z) {
                    return (SpherePoint::Finite(v), dv);
                }
                let (n, dn) = self.numerator.eval_with_derivative(z);
                let (den, dd) = self.denominator.eval_with_derivative(z);
                (SpherePoint::Infinity, (dd * n - den * dn) / (n * n))
            }
            SpherePoint::Infinity => {
                let a_d = self.numerator.coeff(d);
                let a_d1 = self.numerator.coeff(d - 1);
                let b_d = self.denominator.coeff(d);
                let b_d1 = self.denominator.coeff(d - 1);
                if b_d == ZERO {
                    (SpherePoint::Infinity, b_d1 / a_d)
                } else {
                    (SpherePoint::Finite(a_d / b_d), (a_d1 * b_d - a_d * b_d1) / (b_d * b_d))
                }
            }
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &RationalMap) -> RationalMap {
        let d = self.degree;
        let num = self
            .numerator
            .homogeneous_substitute(d, &inner.numerator, &inner.denominator);
        let den = self
            .denominator
            .homogeneous_substitute(d, &inner.numerator, &inner.denominator);
        RationalMap::normalized(num, den, d * inner.degree)
    }

    /// `g^{∘m}`.
    pub fn iterate(&self, m: usize) -> RationalMap {
        assert!(m >= 1, "iterate count must be positive");
        (1..m).fold(self.clone(), |acc, _| self.compose(&acc))
    }

    /// `M ∘ g ∘ M⁻¹`.
    pub fn conjugate(&self, m: &MobiusTransform) -> RationalMap {
        let inv = m.inverse();
        let x = Polynomial::linear(inv.a, inv.b);
        let y = Polynomial::linear(inv.c, inv.d);
        let d = self.degree;
        let a = self.numerator.homogeneous_substitute(d, &x, &y);
        let b = self.denominator.homogeneous_substitute(d, &x, &y);
        let num = a.scale(m.a).add(&b.scale(m.b));
        let den = a.scale(m.c).add(&b.scale(m.d));
        RationalMap::normalized(num.trimmed(TRIM_REL), den.trimmed(TRIM_REL), d)
    }

    fn normalized(num: Polynomial, den: Polynomial, degree: usize) -> RationalMap {
        let scale = num.norm_inf().max(den.norm_inf());
        let k = Complex64::new(1.0 / scale, 0.0);
        RationalMap {
            numerator: num.scale(k),
            denominator: den.scale(k),
            degree,
        }
    }

    /// Sets the constant numerator coefficient to exactly zero, pinning
    /// `g(0) = 0` when 0 is known to be a fixed point.
    pub fn pin_origin_fixed(&mut self) {
        let mut coeffs = self.numerator.coeffs().to_vec();
        if let Some(c) = coeffs.first_mut() {
            *c = ZERO;
        }
        self.numerator = Polynomial::new(coeffs);
    }

    /// All critical points with local degrees; the local degrees minus one
    /// add up to `2d − 2`.
    pub fn critical_points(&self) -> Result<Vec<CriticalPoint>> {
        let w = self
            .numerator
            .derivative()
            .mul(&self.denominator)
            .sub(&self.numerator.mul(&self.denominator.derivative()))
            .trimmed(TRIM_REL);
        let total = 2 * self.degree - 2;
        let mut out: Vec<CriticalPoint> = match w.degree() {
            None => return Err(Error::InvalidMap("vanishing Wronskian".into())),
            Some(0) => Vec::new(),
            Some(_) => w
                .roots()?
                .into_iter()
                .map(|(z, m)| CriticalPoint {
                    point: SpherePoint::Finite(z),
                    local_degree: m + 1,
                })
                .collect(),
        };
        let finite: usize = out.iter().map(|c| c.local_degree - 1).sum();
        if finite < total {
            out.push(CriticalPoint {
                point: SpherePoint::Infinity,
                local_degree: total - finite + 1,
            });
        }
        Ok(out)
    }

    /// All solutions of `g(z) = w` with multiplicity.
    pub fn preimages(&self, w: SpherePoint) -> Result<Vec<(SpherePoint, usize)>> {
        let target = match w {
            SpherePoint::Finite(w) => self.numerator.sub(&self.denominator.scale(w)).trimmed(TRIM_REL),
            SpherePoint::Infinity => self.denominator.trimmed(TRIM_REL),
        };
        let mut out: Vec<(SpherePoint, usize)> = match target.degree() {
            None => return Err(Error::InvalidMap("degenerate preimage equation".into())),
            Some(0) => Vec::new(),
            Some(_) => target
                .roots()?
                .into_iter()
                .map(|(z, m)| (SpherePoint::Finite(z), m))
                .collect(),
        };
        let finite: usize = out.iter().map(|(_, m)| m).sum();
        if finite < self.degree {
            out.push((SpherePoint::Infinity, self.degree - finite));
        }
        Ok(out)
    }

    /// Fixed points with multipliers; `in_p` is set against `base` when given.
    pub fn fixed_points(&self, base: Option<&Configuration>, tol: &Tolerances) -> Result<Vec<FixedPointData>> {
        let f = self.numerator.sub(&self.denominator.shift_up()).trimmed(TRIM_REL);
        let mut locations: Vec<(SpherePoint, usize)> = match f.degree() {
            None => return Err(Error::InvalidMap("identity map".into())),
            Some(0) => Vec::new(),
            Some(_) => f
                .roots()?
                .into_iter()
                .map(|(z, m)| (SpherePoint::Finite(z), m))
                .collect(),
        };
        let finite: usize = locations.iter().map(|(_, m)| m).sum();
        if finite < self.degree + 1 {
            locations.push((SpherePoint::Infinity, self.degree + 1 - finite));
        }
        Ok(locations
            .into_iter()
            .map(|(location, multiplicity)| {
                let (_, multiplier) = self.eval_with_derivative(location);
                FixedPointData {
                    location,
                    multiplier,
                    kind: FixedKind::classify(multiplier),
                    multiplicity,
                    in_p: base.is_some_and(|b| b.contains_point(&location, tol.eps_sep)),
                }
            })
            .collect())
    }

    /// Multiplier of the cycle through `z` of length `period`, in affine charts.
    pub fn cycle_multiplier(&self, z: SpherePoint, period: usize) -> Complex64 {
        let mut point = z;
        let mut mult = ONE;
        for _ in 0..period {
            let (next, d) = self.eval_with_derivative(point);
            mult *= d;
            point = next;
        }
        mult
    }

    /// Newton refinement of a period-`p` point from a finite seed.
    fn refine_periodic(&self, seed: Complex64, period: usize) -> Option<Complex64> {
        let mut z = seed;
        for _ in 0..CYCLE_NEWTON_ITERS {
            let mut w = z;
            let mut dw = ONE;
            for _ in 0..period {
                let (v, d) = self.eval_finite(w)?;
                dw *= d;
                w = v;
            }
            let h = w - z;
            let dh = dw - ONE;
            if h == ZERO {
                break;
            }
            if dh == ZERO {
                return None;
            }
            let step = h / dh;
            z -= step;
            if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1e-300) {
                break;
            }
        }
        Some(z)
    }

    /// Follows every critical value (and every declared point) forward until it
    /// lands on a cycle, refining cycles by Newton on `g^p(z) − z`.
    pub fn postsingular_analysis(&self, declared: &[SpherePoint], tol: &Tolerances) -> Result<PostsingularAnalysis> {
        let critical_points = self.critical_points()?;
        let mut critical_values: Vec<SpherePoint> = Vec::new();
        for c in &critical_points {
            let v = self.eval(c.point);
            if !critical_values.iter().any(|u| u.chordal(&v) <= tol.eps_cycle) {
                critical_values.push(v);
            }
        }

        let mut points: Vec<SpherePoint> = Vec::new();
        let mut image: Vec<Option<usize>> = Vec::new();
        let mut is_declared: Vec<bool> = Vec::new();

        let seeds = critical_values
            .iter()
            .map(|v| (*v, false))
            .chain(declared.iter().map(|v| (*v, true)));
        for (seed, seed_declared) in seeds {
            self.follow_orbit(seed, seed_declared, &mut points, &mut image, &mut is_declared, tol)?;
        }

        let image: Vec<usize> = image.into_iter().map(|i| i.expect("orbit closed")).collect();
        for (i, p) in points.iter().enumerate() {
            let gp = self.eval(*p);
            if gp.chordal(&points[image[i]]) > tol.eps_cycle {
                return Err(Error::NotInvariant(*p));
            }
        }
        if points.len() < 3 {
            return Err(Error::TooFewPoints {
                needed: 3,
                got: points.len(),
            });
        }
        let postsingular = Configuration::from_points("p", &points, tol)?;

        let portrait = critical_values
            .iter()
            .map(|v| {
                let start = postsingular.nearest(v).map(|(i, _)| i).expect("value in P");
                let mut visited = vec![start];
                let mut j = image[start];
                while !visited.contains(&j) {
                    visited.push(j);
                    j = image[j];
                }
                let preperiod = visited.iter().position(|&x| x == j).unwrap();
                OrbitPortrait {
                    value: *v,
                    label: format!("p{start}"),
                    preperiod,
                    period: visited.len() - preperiod,
                }
            })
            .collect();

        Ok(PostsingularAnalysis {
            critical_points,
            critical_values,
            postsingular,
            image,
            declared: is_declared,
            portrait,
            is_psf: true,
        })
    }

    fn follow_orbit(
        &self,
        seed: SpherePoint,
        seed_declared: bool,
        points: &mut Vec<SpherePoint>,
        image: &mut Vec<Option<usize>>,
        declared: &mut Vec<bool>,
        tol: &Tolerances,
    ) -> Result<()> {
        let mut orbit: Vec<SpherePoint> = Vec::new();
        let mut current = seed;
        for _ in 0..=tol.max_orbit {
            let known: Vec<usize> = (0..points.len())
                .filter(|&i| points[i].chordal(&current) <= tol.eps_cycle)
                .collect();
            let earlier: Vec<usize> = (0..orbit.len())
                .filter(|&i| orbit[i].chordal(&current) <= tol.eps_cycle)
                .collect();
            if known.len() + earlier.len() > 1 {
                return Err(Error::AmbiguousCycle(current));
            }
            if let Some(&k) = known.first() {
                // joins an orbit that is already resolved
                if points[k].chordal(&current) > LANDING_TOL {
                    return Err(Error::NotPostsingularlyFinite {
                        value: seed,
                        steps: tol.max_orbit,
                    });
                }
                let base = points.len();
                for (i, p) in orbit.iter().enumerate() {
                    points.push(*p);
                    declared.push(seed_declared && i == 0);
                    image.push(Some(if i + 1 < orbit.len() { base + i + 1 } else { k }));
                }
                if orbit.is_empty() && seed_declared {
                    declared[k] = true;
                }
                return Ok(());
            }
            if let Some(&start) = earlier.first() {
                let period = orbit.len() - start;
                let cycle = self.resolve_cycle(&orbit[start..], seed, tol)?;
                let base = points.len();
                for (i, p) in orbit[..start].iter().chain(cycle.iter()).enumerate() {
                    points.push(*p);
                    declared.push(seed_declared && i == 0);
                    let next = if i + 1 < start + period {
                        base + i + 1
                    } else {
                        base + start
                    };
                    image.push(Some(next));
                }
                return Ok(());
            }
            orbit.push(current);
            current = self.eval(current);
        }
        Err(Error::NotPostsingularlyFinite {
            value: seed,
            steps: tol.max_orbit,
        })
    }

    /// Refines an orbit segment that returned close to itself and checks that
    /// the orbit genuinely lands on the cycle.
    fn resolve_cycle(&self, segment: &[SpherePoint], seed: SpherePoint, tol: &Tolerances) -> Result<Vec<SpherePoint>> {
        let period = segment.len();
        let not_psf = Error::NotPostsingularlyFinite {
            value: seed,
            steps: tol.max_orbit,
        };
        let refined: Vec<SpherePoint> = match segment[0] {
            SpherePoint::Finite(z) if segment.iter().all(|p| p.finite().is_some_and(|w| w.norm() < 1e8)) => {
                let start = self.refine_periodic(z, period).ok_or(not_psf.clone())?;
                let mut cycle = vec![SpherePoint::Finite(start)];
                for _ in 1..period {
                    let next = self.eval(*cycle.last().unwrap());
                    cycle.push(next);
                }
                cycle
            }
            _ => segment.to_vec(),
        };
        for (a, b) in segment.iter().zip(refined.iter()) {
            if a.chordal(b) > LANDING_TOL {
                return Err(not_psf);
            }
        }
        let closing = self.eval(*refined.last().unwrap());
        if closing.chordal(&refined[0]) > LANDING_TOL {
            return Err(not_psf);
        }
        let multiplier = self.cycle_multiplier(refined[0], period);
        if FixedKind::classify(multiplier) == FixedKind::Attracting {
            return Err(not_psf);
        }
        Ok(refined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn close(a: SpherePoint, b: SpherePoint, eps: f64) -> bool {
        a.chordal(&b) <= eps
    }

    #[test]
    fn evaluation_examples() {
        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let (v, d) = g.eval_with_derivative(SpherePoint::real(3.0));
        assert_eq!(v, SpherePoint::real(7.0));
        assert_eq!(d, c(6.0, 0.0));
        let (v, d) = g.eval_with_derivative(SpherePoint::Infinity);
        assert_eq!(v, SpherePoint::Infinity);
        assert_eq!(d, c(0.0, 0.0));
        let sq = RationalMap::quadratic(c(0.0, 0.0));
        let (v, d) = sq.eval_with_derivative(SpherePoint::new(0.0, 1.0));
        assert_eq!(v, SpherePoint::real(-1.0));
        assert_eq!(d, c(0.0, 2.0));
    }

    #[test]
    fn derivative_at_infinity_matches_conjugate_chart() {
        // w ↦ w²/(1 − 2w²) has derivative 0 at 0; check a map with a
        // nonzero chart derivative: g = (z² + 1)/(2z) has g(∞) = ∞ with
        // G(w) = 2w/(1 + w²), G'(0) = 2.
        let g = RationalMap::new(
            Polynomial::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
            Polynomial::new(vec![c(0.0, 0.0), c(2.0, 0.0)]),
            &tol(),
        )
        .unwrap();
        let (v, d) = g.eval_with_derivative(SpherePoint::Infinity);
        assert_eq!(v, SpherePoint::Infinity);
        assert!((d - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn critical_point_examples() {
        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let cps = g.critical_points().unwrap();
        assert_eq!(
            cps,
            vec![
                CriticalPoint {
                    point: SpherePoint::real(0.0),
                    local_degree: 2
                },
                CriticalPoint {
                    point: SpherePoint::Infinity,
                    local_degree: 2
                },
            ]
        );
        let h = RationalMap::new(
            Polynomial::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
            Polynomial::new(vec![c(0.0, 0.0), c(1.0, 0.0)]),
            &tol(),
        )
        .unwrap();
        let cps = h.critical_points().unwrap();
        assert_eq!(cps.len(), 2);
        assert!(close(cps[0].point, SpherePoint::real(-1.0), 1e-12));
        assert!(close(cps[1].point, SpherePoint::real(1.0), 1e-12));
        assert!(cps.iter().all(|c| c.local_degree == 2));
    }

    #[test]
    fn common_factor_rejected() {
        let r = RationalMap::new(
            Polynomial::new(vec![c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
            Polynomial::new(vec![c(-1.0, 0.0), c(1.0, 0.0)]),
            &tol(),
        );
        assert!(matches!(r, Err(Error::InvalidMap(_))));
        assert!(RationalMap::polynomial(vec![c(1.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn chebyshev_postsingular_set() {
        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let a = g.postsingular_analysis(&[], &tol()).unwrap();
        let pts: Vec<SpherePoint> = a.postsingular.points().collect();
        assert_eq!(pts.len(), 3);
        for expected in [SpherePoint::real(-2.0), SpherePoint::real(2.0), SpherePoint::Infinity] {
            assert!(pts.iter().any(|p| close(*p, expected, 1e-12)));
        }
        let finite = a.portrait.iter().find(|o| !o.value.is_infinite()).unwrap();
        assert_eq!((finite.preperiod, finite.period), (1, 1));
        let inf = a.portrait.iter().find(|o| o.value.is_infinite()).unwrap();
        assert_eq!((inf.preperiod, inf.period), (0, 1));
    }

    #[test]
    fn basilica_postsingular_set() {
        let g = RationalMap::quadratic(c(-1.0, 0.0));
        let a = g.postsingular_analysis(&[], &tol()).unwrap();
        let pts: Vec<SpherePoint> = a.postsingular.points().collect();
        for expected in [SpherePoint::real(0.0), SpherePoint::real(-1.0), SpherePoint::Infinity] {
            assert!(pts.iter().any(|p| close(*p, expected, 1e-12)));
        }
        let finite = a.portrait.iter().find(|o| !o.value.is_infinite()).unwrap();
        assert_eq!((finite.preperiod, finite.period), (0, 2));
    }

    #[test]
    fn attracting_orbit_is_not_psf() {
        let g = RationalMap::quadratic(c(0.1, 0.0));
        assert!(matches!(
            g.postsingular_analysis(&[], &tol()),
            Err(Error::NotPostsingularlyFinite { .. })
        ));
    }

    #[test]
    fn squaring_needs_a_declared_point() {
        let g = RationalMap::quadratic(c(0.0, 0.0));
        assert!(matches!(
            g.postsingular_analysis(&[], &tol()),
            Err(Error::TooFewPoints { .. })
        ));
        let a = g.postsingular_analysis(&[SpherePoint::real(1.0)], &tol()).unwrap();
        assert_eq!(a.postsingular.len(), 3);
        assert_eq!(a.declared.iter().filter(|d| **d).count(), 1);
        assert!(matches!(
            g.postsingular_analysis(&[SpherePoint::real(0.5)], &tol()),
            Err(Error::NotPostsingularlyFinite { .. })
        ));
    }

    #[test]
    fn forward_invariance_after_snapping() {
        for cst in [-2.0, -1.0] {
            let g = RationalMap::quadratic(c(cst, 0.0));
            let a = g.postsingular_analysis(&[], &tol()).unwrap();
            for (i, p) in a.postsingular.points().enumerate() {
                let gp = g.eval(p);
                let (j, d) = a.postsingular.nearest(&gp).unwrap();
                assert_eq!(j, a.image[i]);
                assert!(d < 1e-12);
            }
        }
    }

    #[test]
    fn chebyshev_fixed_points() {
        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let a = g.postsingular_analysis(&[], &tol()).unwrap();
        let fps = g.fixed_points(Some(&a.postsingular), &tol()).unwrap();
        assert_eq!(fps.len(), 3);
        let two = fps
            .iter()
            .find(|f| close(f.location, SpherePoint::real(2.0), 1e-12))
            .unwrap();
        assert!((two.multiplier - c(4.0, 0.0)).norm() < 1e-12);
        assert_eq!(two.kind, FixedKind::Repelling);
        assert!(two.in_p);
        let m1 = fps
            .iter()
            .find(|f| close(f.location, SpherePoint::real(-1.0), 1e-12))
            .unwrap();
        assert!((m1.multiplier - c(-2.0, 0.0)).norm() < 1e-12);
        assert!(!m1.in_p);
        let inf = fps.iter().find(|f| f.location.is_infinite()).unwrap();
        assert_eq!(inf.kind, FixedKind::Superattracting);
        assert!(inf.in_p);
    }

    #[test]
    fn basilica_and_squaring_fixed_points() {
        let g = RationalMap::quadratic(c(-1.0, 0.0));
        let a = g.postsingular_analysis(&[], &tol()).unwrap();
        let fps = g.fixed_points(Some(&a.postsingular), &tol()).unwrap();
        let golden = (1.0 - 5f64.sqrt()) / 2.0;
        for x in [golden, (1.0 + 5f64.sqrt()) / 2.0] {
            let f = fps
                .iter()
                .find(|f| close(f.location, SpherePoint::real(x), 1e-12))
                .unwrap();
            assert_eq!(f.kind, FixedKind::Repelling);
            assert!(!f.in_p);
        }
        let sq = RationalMap::quadratic(c(0.0, 0.0));
        let fps = sq.fixed_points(None, &tol()).unwrap();
        assert_eq!(fps.len(), 3);
        assert_eq!(fps[0].kind, FixedKind::Superattracting);
        assert_eq!(fps[1].kind, FixedKind::Repelling);
        assert!((fps[1].multiplier - c(2.0, 0.0)).norm() < 1e-12);
        assert_eq!(fps[2].location, SpherePoint::Infinity);
    }

    #[test]
    fn preimage_examples() {
        let sq = RationalMap::quadratic(c(0.0, 0.0));
        let pre = sq.preimages(SpherePoint::real(1.0)).unwrap();
        assert_eq!(pre.len(), 2);
        assert!(close(pre[0].0, SpherePoint::real(-1.0), 1e-14));
        assert!(close(pre[1].0, SpherePoint::real(1.0), 1e-14));

        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let pre = g.preimages(SpherePoint::real(-2.0)).unwrap();
        assert_eq!(pre, vec![(SpherePoint::real(0.0), 2)]);
        let pre = g.preimages(SpherePoint::real(2.0)).unwrap();
        assert!(close(pre[0].0, SpherePoint::real(-2.0), 1e-14));
        assert!(close(pre[1].0, SpherePoint::real(2.0), 1e-14));
        assert_eq!(
            g.preimages(SpherePoint::Infinity).unwrap(),
            vec![(SpherePoint::Infinity, 2)]
        );
    }

    #[test]
    fn composition_and_iterates() {
        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let g2 = g.iterate(2);
        assert_eq!(g2.degree(), 4);
        for z in [c(0.3, 0.1), c(-1.2, 0.5)] {
            let direct = g.eval_finite(g.eval_finite(z).unwrap().0).unwrap().0;
            assert!((g2.eval_finite(z).unwrap().0 - direct).norm() < 1e-12);
        }
        let sq3 = RationalMap::quadratic(c(0.0, 0.0)).iterate(3);
        let cps = sq3.critical_points().unwrap();
        assert_eq!(
            cps[0],
            CriticalPoint {
                point: SpherePoint::real(0.0),
                local_degree: 8
            }
        );
        assert_eq!(
            cps[1],
            CriticalPoint {
                point: SpherePoint::Infinity,
                local_degree: 8
            }
        );
    }

    #[test]
    fn conjugation_by_translation() {
        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let m = MobiusTransform::translation(c(-2.0, 0.0));
        let mut h = g.conjugate(&m);
        h.pin_origin_fixed();
        // (u + 2)² − 2 − 2 = u² + 4u
        let u = c(1e-60, 0.0);
        let (v, d) = h.eval_finite(u).unwrap();
        assert!((v.re / 4e-60 - 1.0).abs() < 1e-14);
        assert!((d - c(4.0, 0.0)).norm() < 1e-14);
        let w = c(0.3, -0.2);
        let lhs = h.eval_finite(w).unwrap().0;
        let rhs = g.eval_finite(w + 2.0).unwrap().0 - 2.0;
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn wire_format() {
        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(
            text,
            r#"{"numerator":[[-2.0,0.0],[0.0,0.0],[1.0,0.0]],"denominator":[[1.0,0.0]]}"#
        );
        let back: RationalMap = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
    }
}
