//! Riemann-sphere arithmetic: points of the extended plane, Möbius
//! transformations, labeled marked configurations and their moduli-space
//! coordinates.

use std::fmt;

use num_complex::Complex64;
use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::ser::{SerializeMap, SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

/// A point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpherePoint {
    Finite(Complex64),
    Infinity,
}

impl SpherePoint {
    pub fn new(re: f64, im: f64) -> Self {
        SpherePoint::Finite(Complex64::new(re, im))
    }

    pub fn real(re: f64) -> Self {
        SpherePoint::new(re, 0.0)
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match *self {
            SpherePoint::Finite(z) => Some(z),
            SpherePoint::Infinity => None,
        }
    }

    /// Reciprocal `z ↦ 1/z`, exchanging 0 and ∞.
    pub fn recip(&self) -> SpherePoint {
        match *self {
            SpherePoint::Infinity => SpherePoint::Finite(Complex64::new(0.0, 0.0)),
            SpherePoint::Finite(z) if z == Complex64::new(0.0, 0.0) => SpherePoint::Infinity,
            SpherePoint::Finite(z) => SpherePoint::Finite(z.inv()),
        }
    }

    /// Chordal distance, normalized so that antipodal points are at distance 2.
    pub fn chordal(&self, other: &SpherePoint) -> f64 {
        match (*self, *other) {
            (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
            (SpherePoint::Finite(z), SpherePoint::Infinity) | (SpherePoint::Infinity, SpherePoint::Finite(z)) => {
                let r = z.norm();
                if r > 1e150 {
                    2.0 / r
                } else {
                    2.0 / (1.0 + r * r).sqrt()
                }
            }
            (SpherePoint::Finite(z), SpherePoint::Finite(w)) => {
                if z.norm() > 1e150 || w.norm() > 1e150 {
                    return self.recip().chordal(&other.recip());
                }
                let num = 2.0 * (z - w).norm();
                num / ((1.0 + z.norm_sqr()).sqrt() * (1.0 + w.norm_sqr()).sqrt())
            }
        }
    }
}

impl From<Complex64> for SpherePoint {
    fn from(z: Complex64) -> Self {
        SpherePoint::Finite(z)
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpherePoint::Infinity => write!(f, "∞"),
            SpherePoint::Finite(z) if z.im == 0.0 => write!(f, "{}", z.re),
            SpherePoint::Finite(z) => write!(f, "{}{:+}i", z.re, z.im),
        }
    }
}

/// Serializes a finite complex number as `[re, im]`.
pub fn serialize_complex<S: Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(2))?;
    seq.serialize_element(&z.re)?;
    seq.serialize_element(&z.im)?;
    seq.end()
}

pub fn deserialize_complex<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Complex64, D::Error> {
    let [re, im] = <[f64; 2]>::deserialize(d)?;
    Ok(Complex64::new(re, im))
}

/// `[re, im]` wire form for complex values inside other records.
pub mod complex_serde {
    pub use super::{deserialize_complex as deserialize, serialize_complex as serialize};
}

/// `[[re, im], ...]` wire form for complex vectors.
pub mod complex_vec_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|z| [z.re, z.im]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

impl Serialize for SpherePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SpherePoint::Infinity => s.serialize_str("inf"),
            SpherePoint::Finite(z) => serialize_complex(z, s),
        }
    }
}

impl<'de> Deserialize<'de> for SpherePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct PointVisitor;

        impl<'de> Visitor<'de> for PointVisitor {
            type Value = SpherePoint;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a [re, im] pair or the string \"inf\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<SpherePoint, E> {
                match v {
                    "inf" => Ok(SpherePoint::Infinity),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<SpherePoint, A::Error> {
                let re: f64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let im: f64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<f64>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                if !(re.is_finite() && im.is_finite()) {
                    return Err(de::Error::custom("non-finite coordinate"));
                }
                Ok(SpherePoint::new(re, im))
            }
        }

        d.deserialize_any(PointVisitor)
    }
}

/// `z ↦ (az + b)/(cz + d)` with `ad − bc ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusTransform {
    #[serde(with = "complex_serde")]
    pub a: Complex64,
    #[serde(with = "complex_serde")]
    pub b: Complex64,
    #[serde(with = "complex_serde")]
    pub c: Complex64,
    #[serde(with = "complex_serde")]
    pub d: Complex64,
}

impl MobiusTransform {
    /// Builds a transform, rescaling so the largest coefficient has modulus 1
    /// and rejecting it when the rescaled determinant is below `eps_det`.
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64, eps_det: f64) -> Result<Self> {
        let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::DegenerateMobius(0.0));
        }
        let m = MobiusTransform {
            a: a / scale,
            b: b / scale,
            c: c / scale,
            d: d / scale,
        };
        let det = m.det().norm();
        if det <= eps_det {
            return Err(Error::DegenerateMobius(det));
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        MobiusTransform {
            a: one,
            b: zero,
            c: zero,
            d: one,
        }
    }

    /// `z ↦ z + shift`.
    pub fn translation(shift: Complex64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        MobiusTransform {
            a: one,
            b: shift,
            c: zero,
            d: one,
        }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, z: SpherePoint) -> SpherePoint {
        let zero = Complex64::new(0.0, 0.0);
        match z {
            SpherePoint::Infinity => {
                if self.c == zero {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::Finite(self.a / self.c)
                }
            }
            SpherePoint::Finite(z) => {
                let den = self.c * z + self.d;
                if den == zero {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::Finite((self.a * z + self.b) / den)
                }
            }
        }
    }

    /// Applies to a finite point known to map to a finite point.
    pub fn apply_finite(&self, z: Complex64) -> Option<Complex64> {
        self.apply(SpherePoint::Finite(z)).finite()
    }

    pub fn inverse(&self) -> Self {
        MobiusTransform {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MobiusTransform) -> Self {
        let m = MobiusTransform {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        };
        let scale = m.a.norm().max(m.b.norm()).max(m.c.norm()).max(m.d.norm());
        MobiusTransform {
            a: m.a / scale,
            b: m.b / scale,
            c: m.c / scale,
            d: m.d / scale,
        }
    }

    /// The point sent to ∞.
    pub fn pole(&self) -> SpherePoint {
        if self.c == Complex64::new(0.0, 0.0) {
            SpherePoint::Infinity
        } else {
            SpherePoint::Finite(-self.d / self.c)
        }
    }

    /// Projective equality: the coefficient vectors are proportional.
    pub fn approx_eq(&self, other: &MobiusTransform, tol: f64) -> bool {
        let u = [self.a, self.b, self.c, self.d];
        let v = [other.a, other.b, other.c, other.d];
        let (k, _) = u
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .expect("four coefficients");
        if v[k].norm() == 0.0 {
            return false;
        }
        let ratio = u[k] / v[k];
        u.iter()
            .zip(v.iter())
            .all(|(x, y)| (x - ratio * y).norm() <= tol * u[k].norm())
    }
}

/// Projective matrix sending `(p1, p2, p3)` to `(0, 1, ∞)`.
fn to_standard_triple(p: [SpherePoint; 3]) -> [Complex64; 4] {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    match p {
        [SpherePoint::Infinity, SpherePoint::Finite(p2), SpherePoint::Finite(p3)] => [zero, p2 - p3, one, -p3],
        [SpherePoint::Finite(p1), SpherePoint::Infinity, SpherePoint::Finite(p3)] => [one, -p1, one, -p3],
        [SpherePoint::Finite(p1), SpherePoint::Finite(p2), SpherePoint::Infinity] => [one, -p1, zero, p2 - p1],
        [SpherePoint::Finite(p1), SpherePoint::Finite(p2), SpherePoint::Finite(p3)] => {
            [p2 - p3, -p1 * (p2 - p3), p2 - p1, -p3 * (p2 - p1)]
        }
        _ => unreachable!("distinct triple has at most one point at infinity"),
    }
}

fn check_triple(p: &[SpherePoint; 3], tol: &Tolerances) -> Result<()> {
    for i in 0..3 {
        for j in (i + 1)..3 {
            if p[i].chordal(&p[j]) <= tol.eps_sep {
                return Err(Error::DegenerateTriple);
            }
        }
    }
    Ok(())
}

/// The unique Möbius transformation with `M(p_i) = q_i`.
pub fn mobius_from_triples(p: [SpherePoint; 3], q: [SpherePoint; 3], tol: &Tolerances) -> Result<MobiusTransform> {
    check_triple(&p, tol)?;
    check_triple(&q, tol)?;
    let [a, b, c, d] = to_standard_triple(p);
    let tp = MobiusTransform::new(a, b, c, d, 0.0).map_err(|_| Error::DegenerateTriple)?;
    let [a, b, c, d] = to_standard_triple(q);
    let tq = MobiusTransform::new(a, b, c, d, 0.0).map_err(|_| Error::DegenerateTriple)?;
    let m = tq.inverse().compose(&tp);
    MobiusTransform::new(m.a, m.b, m.c, m.d, tol.eps_det).map_err(|_| Error::DegenerateTriple)
}

/// An ordered, labeled set of pairwise distinct sphere points.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    entries: Vec<(String, SpherePoint)>,
}

impl Configuration {
    pub fn new(entries: Vec<(String, SpherePoint)>, tol: &Tolerances) -> Result<Self> {
        if entries.len() < 3 {
            return Err(Error::TooFewPoints {
                needed: 3,
                got: entries.len(),
            });
        }
        Self::new_unchecked_len(entries, tol)
    }

    fn new_unchecked_len(entries: Vec<(String, SpherePoint)>, tol: &Tolerances) -> Result<Self> {
        for i in 0..entries.len() {
            for j in (i + 1)..entries.len() {
                if entries[i].0 == entries[j].0 {
                    return Err(Error::InvalidRun(format!("duplicate label `{}`", entries[i].0)));
                }
                let sep = entries[i].1.chordal(&entries[j].1);
                if sep <= tol.eps_sep {
                    return Err(Error::CollisionDetected {
                        first: entries[i].0.clone(),
                        second: entries[j].0.clone(),
                        separation: sep,
                    });
                }
            }
        }
        Ok(Configuration { entries })
    }

    /// Builds a configuration with labels `prefix0, prefix1, ...`.
    pub fn from_points(prefix: &str, points: &[SpherePoint], tol: &Tolerances) -> Result<Self> {
        let entries = points
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("{prefix}{i}"), *p))
            .collect();
        Self::new(entries, tol)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, SpherePoint)] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn points(&self) -> impl Iterator<Item = SpherePoint> + '_ {
        self.entries.iter().map(|(_, p)| *p)
    }

    pub fn get(&self, label: &str) -> Option<SpherePoint> {
        self.entries.iter().find(|(l, _)| l == label).map(|(_, p)| *p)
    }

    /// Index and chordal distance of the nearest point.
    pub fn nearest(&self, z: &SpherePoint) -> Option<(usize, f64)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (i, p.chordal(z)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn contains_point(&self, z: &SpherePoint, eps: f64) -> bool {
        self.nearest(z).is_some_and(|(_, d)| d <= eps)
    }

    /// Label projection onto `keep`, preserving the original order.
    pub fn forget(&self, keep: &[&str]) -> Result<Self> {
        for k in keep {
            if self.get(k).is_none() {
                return Err(Error::UnknownLabel(k.to_string()));
            }
        }
        Ok(Configuration {
            entries: self
                .entries
                .iter()
                .filter(|(l, _)| keep.contains(&l.as_str()))
                .cloned()
                .collect(),
        })
    }

    /// Image under a Möbius transformation; labels are unchanged.
    pub fn transform(&self, m: &MobiusTransform) -> Configuration {
        Configuration {
            entries: self.entries.iter().map(|(l, p)| (l.clone(), m.apply(*p))).collect(),
        }
    }

    /// Appends a labeled point, rechecking distinctness.
    pub fn with_point(&self, label: &str, point: SpherePoint, tol: &Tolerances) -> Result<Self> {
        let mut entries = self.entries.clone();
        entries.push((label.to_string(), point));
        Self::new_unchecked_len(entries, tol)
    }
}

impl Serialize for Configuration {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.entries.len()))?;
        for (label, point) in &self.entries {
            map.serialize_entry(label, point)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ConfigVisitor;

        impl<'de> Visitor<'de> for ConfigVisitor {
            type Value = Vec<(String, SpherePoint)>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from labels to points")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, SpherePoint>()? {
                    entries.push((k, v));
                }
                Ok(entries)
            }
        }

        let entries = d.deserialize_map(ConfigVisitor)?;
        Configuration::new(entries, &Tolerances::default()).map_err(de::Error::custom)
    }
}

/// Coordinates in `ℂᵏ − Λₖ` obtained by sending three anchor labels to 0, 1, ∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuliCoordinates {
    pub anchors: [String; 3],
    pub labels: Vec<String>,
    #[serde(with = "complex_vec_serde")]
    pub coords: Vec<Complex64>,
}

impl ModuliCoordinates {
    pub fn get(&self, label: &str) -> Option<Complex64> {
        self.labels.iter().position(|l| l == label).map(|i| self.coords[i])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Applies the Möbius map sending the anchors to `(0, 1, ∞)` and returns the
/// remaining points in configuration order.
pub fn normalize_configuration(
    config: &Configuration,
    anchors: [&str; 3],
    tol: &Tolerances,
) -> Result<ModuliCoordinates> {
    if config.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: config.len(),
        });
    }
    let mut p = [SpherePoint::Infinity; 3];
    for (slot, label) in p.iter_mut().zip(anchors.iter()) {
        *slot = config
            .get(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    }
    if anchors[0] == anchors[1] || anchors[1] == anchors[2] || anchors[0] == anchors[2] {
        return Err(Error::DegenerateTriple);
    }
    let zero = SpherePoint::real(0.0);
    let one = SpherePoint::real(1.0);
    let m = mobius_from_triples(p, [zero, one, SpherePoint::Infinity], tol)?;

    let mut labels = Vec::new();
    let mut coords: Vec<Complex64> = Vec::new();
    for (label, point) in config.entries() {
        if anchors.contains(&label.as_str()) {
            continue;
        }
        let image = m.apply(*point);
        let z = match image {
            SpherePoint::Finite(z) => z,
            SpherePoint::Infinity => {
                return Err(Error::CollisionDetected {
                    first: label.clone(),
                    second: anchors[2].to_string(),
                    separation: 0.0,
                })
            }
        };
        for (anchor, value) in [
            (anchors[0], zero),
            (anchors[1], one),
            (anchors[2], SpherePoint::Infinity),
        ] {
            let sep = image.chordal(&value);
            if sep <= tol.eps_sep {
                return Err(Error::CollisionDetected {
                    first: label.clone(),
                    second: anchor.to_string(),
                    separation: sep,
                });
            }
        }
        for (other_label, other) in labels.iter().zip(coords.iter()) {
            let sep = image.chordal(&SpherePoint::Finite(*other));
            if sep <= tol.eps_sep {
                return Err(Error::CollisionDetected {
                    first: label.clone(),
                    second: String::clone(other_label),
                    separation: sep,
                });
            }
        }
        labels.push(label.clone());
        coords.push(z);
    }
    Ok(ModuliCoordinates {
        anchors: anchors.map(str::to_string),
        labels,
        coords,
    })
}

/// Coordinate projection onto the kept labels; anchors are always retained.
pub fn forget_coordinates(coords: &ModuliCoordinates, keep: &[&str]) -> Result<ModuliCoordinates> {
    for k in keep {
        if coords.get(k).is_none() && !coords.anchors.iter().any(|a| a == k) {
            return Err(Error::UnknownLabel(k.to_string()));
        }
    }
    let (labels, values) = coords
        .labels
        .iter()
        .zip(coords.coords.iter())
        .filter(|(l, _)| keep.contains(&l.as_str()))
        .map(|(l, z)| (l.clone(), *z))
        .unzip();
    Ok(ModuliCoordinates {
        anchors: coords.anchors.clone(),
        labels,
        coords: values,
    })
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

    #[test]
    fn identity_from_standard_triple() {
        let std = [SpherePoint::real(0.0), SpherePoint::real(1.0), SpherePoint::Infinity];
        let m = mobius_from_triples(std, std, &tol()).unwrap();
        assert!(m.approx_eq(&MobiusTransform::identity(), 1e-14));
    }

    #[test]
    fn affine_triple() {
        let p = [SpherePoint::real(-2.0), SpherePoint::real(2.0), SpherePoint::Infinity];
        let q = [SpherePoint::real(0.0), SpherePoint::real(1.0), SpherePoint::Infinity];
        let m = mobius_from_triples(p, q, &tol()).unwrap();
        let expected = MobiusTransform::new(c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(4.0, 0.0), 1e-12).unwrap();
        assert!(m.approx_eq(&expected, 1e-14));
    }

    #[test]
    fn swap_of_anchors() {
        let p = [SpherePoint::real(0.0), SpherePoint::real(1.0), SpherePoint::Infinity];
        let q = [SpherePoint::real(1.0), SpherePoint::real(0.0), SpherePoint::Infinity];
        let m = mobius_from_triples(p, q, &tol()).unwrap();
        let expected = MobiusTransform::new(c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), 1e-12).unwrap();
        assert!(m.approx_eq(&expected, 1e-14));
    }

    #[test]
    fn degenerate_triple_rejected() {
        let p = [SpherePoint::real(0.0), SpherePoint::real(1e-12), SpherePoint::Infinity];
        let q = [SpherePoint::real(0.0), SpherePoint::real(1.0), SpherePoint::Infinity];
        assert_eq!(mobius_from_triples(p, q, &tol()), Err(Error::DegenerateTriple));
    }

    #[test]
    fn apply_extended() {
        let m = MobiusTransform::new(c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(4.0, 0.0), 1e-12).unwrap();
        assert_eq!(m.apply(SpherePoint::real(0.0)), SpherePoint::real(0.5));
        assert_eq!(m.apply(SpherePoint::Infinity), SpherePoint::Infinity);
        let inv = MobiusTransform::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), 1e-12).unwrap();
        assert_eq!(inv.apply(SpherePoint::real(0.0)), SpherePoint::Infinity);
        assert_eq!(inv.apply(SpherePoint::Infinity), SpherePoint::real(0.0));
    }

    #[test]
    fn degenerate_mobius_rejected() {
        let r = MobiusTransform::new(c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0), 1e-12);
        assert!(matches!(r, Err(Error::DegenerateMobius(_))));
    }

    fn labeled(points: &[(&str, SpherePoint)]) -> Configuration {
        Configuration::new(points.iter().map(|(l, p)| (l.to_string(), *p)).collect(), &tol()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let config = labeled(&[
            ("a", SpherePoint::real(-2.0)),
            ("b", SpherePoint::real(2.0)),
            ("inf", SpherePoint::Infinity),
            ("x", SpherePoint::real(0.0)),
        ]);
        let coords = normalize_configuration(&config, ["a", "b", "inf"], &tol()).unwrap();
        assert_eq!(coords.labels, vec!["x".to_string()]);
        assert!((coords.coords[0] - c(0.5, 0.0)).norm() < 1e-15);

        let lambda = c(0.3, 0.7);
        let config = labeled(&[
            ("p0", SpherePoint::real(0.0)),
            ("p1", SpherePoint::real(1.0)),
            ("p2", SpherePoint::Infinity),
            ("x", SpherePoint::Finite(lambda)),
        ]);
        let coords = normalize_configuration(&config, ["p0", "p1", "p2"], &tol()).unwrap();
        assert_eq!(coords.coords, vec![lambda]);
    }

    #[test]
    fn normalize_detects_collision() {
        let entries = vec![
            ("p0".to_string(), SpherePoint::real(0.0)),
            ("p1".to_string(), SpherePoint::real(1.0)),
            ("p2".to_string(), SpherePoint::Infinity),
            ("x".to_string(), SpherePoint::real(1.0 + 1e-15)),
        ];
        assert!(matches!(
            Configuration::new(entries, &tol()),
            Err(Error::CollisionDetected { .. })
        ));
    }

    #[test]
    fn forget_examples() {
        let coords = ModuliCoordinates {
            anchors: ["a".into(), "b".into(), "c".into()],
            labels: vec!["z1".into(), "z2".into()],
            coords: vec![c(0.25, 0.0), c(0.0, 3.0)],
        };
        let kept = forget_coordinates(&coords, &["z1"]).unwrap();
        assert_eq!(kept.coords, vec![c(0.25, 0.0)]);
        let all = forget_coordinates(&coords, &["z1", "z2"]).unwrap();
        assert_eq!(all, coords);
        assert!(matches!(
            forget_coordinates(&coords, &["nope"]),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn forget_commutes_with_normalize() {
        let config = labeled(&[
            ("a", SpherePoint::real(-2.0)),
            ("b", SpherePoint::real(2.0)),
            ("inf", SpherePoint::Infinity),
            ("x", SpherePoint::real(0.0)),
            ("y", SpherePoint::new(0.0, 1.0)),
        ]);
        let anchors = ["a", "b", "inf"];
        let lhs = forget_coordinates(&normalize_configuration(&config, anchors, &tol()).unwrap(), &["x"]).unwrap();
        let reduced = config.forget(&["a", "b", "inf", "x"]).unwrap();
        let rhs = normalize_configuration(&reduced, anchors, &tol()).unwrap();
        assert_eq!(lhs.labels, rhs.labels);
        assert!((lhs.coords[0] - rhs.coords[0]).norm() <= 1e-12);
        assert!((lhs.coords[0] - c(0.5, 0.0)).norm() <= 1e-12);
        // (i + 2)/4
        let full = normalize_configuration(&config, anchors, &tol()).unwrap();
        assert!((full.get("y").unwrap() - c(0.5, 0.25)).norm() <= 1e-12);
    }

    #[test]
    fn serde_wire_forms() {
        assert_eq!(serde_json::to_string(&SpherePoint::Infinity).unwrap(), "\"inf\"");
        assert_eq!(
            serde_json::to_string(&SpherePoint::new(1.5, -2.0)).unwrap(),
            "[1.5,-2.0]"
        );
        let p: SpherePoint = serde_json::from_str("[0.25, 1]").unwrap();
        assert_eq!(p, SpherePoint::new(0.25, 1.0));
        assert!(serde_json::from_str::<SpherePoint>("\"nan\"").is_err());

        let config = labeled(&[
            ("p0", SpherePoint::real(-2.0)),
            ("p1", SpherePoint::real(2.0)),
            ("p2", SpherePoint::Infinity),
        ]);
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(text, r#"{"p0":[-2.0,0.0],"p1":[2.0,0.0],"p2":"inf"}"#);
        let back: Configuration = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn chordal_metric_basics() {
        let zero = SpherePoint::real(0.0);
        assert!((zero.chordal(&SpherePoint::Infinity) - 2.0).abs() < 1e-15);
        let big = SpherePoint::real(1e200);
        assert!(big.chordal(&SpherePoint::Infinity) < 1e-199);
        let one = SpherePoint::real(1.0);
        assert!((one.chordal(&SpherePoint::real(-1.0)) - 2.0).abs() < 1e-15);
    }
}
