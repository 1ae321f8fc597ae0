//! Dense complex polynomials and a simultaneous root finder (Aberth–Ehrlich
//! iteration, cluster detection for multiple roots, Newton polish).

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

const ABERTH_MAX_ITERS: usize = 600;
const POLISH_ITERS: usize = 40;
const CLUSTER_REL: f64 = 1e-3;
const CLUSTER_TAYLOR_TOL: f64 = 1e-8;
const ROUNDOFF_SPREAD: f64 = 1e-13;
const BACKWARD_ERROR_TOL: f64 = 1e-6;

/// Coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    /// Trailing exact zeros are dropped.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.last() == Some(&ZERO) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: Complex64) -> Self {
        Polynomial::new(vec![c])
    }

    /// `a z + b`
    pub fn linear(a: Complex64, b: Complex64) -> Self {
        Polynomial::new(vec![b, a])
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, i: usize) -> Complex64 {
        self.coeffs.get(i).copied().unwrap_or(ZERO)
    }

    /// Drops leading coefficients below `rel · max|coeff|`.
    pub fn trimmed(&self, rel: f64) -> Polynomial {
        let scale = self.norm_inf();
        let mut coeffs = self.coeffs.clone();
        while coeffs.last().is_some_and(|c| c.norm() <= rel * scale) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
    }

    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = ZERO;
        let mut dp = ZERO;
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// `Σ |a_i| |z|^i`, the natural scale of `p(z)` for backward-error tests.
    pub fn magnitude_at(&self, z: Complex64) -> f64 {
        let r = z.norm();
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    pub fn scale(&self, k: Complex64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|&c| c * k).collect())
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) + other.coeff(i)).collect())
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) - other.coeff(i)).collect())
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    /// Multiplication by `z`.
    pub fn shift_up(&self) -> Polynomial {
        if self.is_zero() {
            return Polynomial::zero();
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(ZERO);
        coeffs.extend_from_slice(&self.coeffs);
        Polynomial::new(coeffs)
    }

    /// Coefficients of `p(z + c)`.
    pub fn taylor_shift(&self, c: Complex64) -> Polynomial {
        let mut a = self.coeffs.clone();
        let n = a.len();
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                let next = a[j + 1];
                a[j] += c * next;
            }
        }
        Polynomial::new(a)
    }

    /// Evaluates `Σ a_i X^i Y^(d−i)` for polynomials `X`, `Y`, i.e. the
    /// degree-`d` homogenization of `self` composed with a pair of polynomials.
    pub fn homogeneous_substitute(&self, d: usize, x: &Polynomial, y: &Polynomial) -> Polynomial {
        let mut xp = vec![Polynomial::constant(ONE)];
        let mut yp = vec![Polynomial::constant(ONE)];
        for k in 1..=d {
            xp.push(xp[k - 1].mul(x));
            yp.push(yp[k - 1].mul(y));
        }
        let mut out = Polynomial::zero();
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            out = out.add(&xp[i].mul(&yp[d - i]).scale(a));
        }
        out
    }

    /// Roots with multiplicities, sorted by real then imaginary part.
    pub fn roots(&self) -> Result<Vec<(Complex64, usize)>> {
        let Some(degree) = self.degree() else {
            return Err(Error::InvalidMap("roots of the zero polynomial".into()));
        };
        let mut out = Vec::new();
        let zeros_at_origin = self.coeffs.iter().take_while(|c| **c == ZERO).count();
        if zeros_at_origin > 0 {
            out.push((ZERO, zeros_at_origin));
        }
        let reduced = Polynomial::new(self.coeffs[zeros_at_origin..].to_vec());
        if reduced.degree().unwrap_or(0) > 0 {
            let approx = aberth(&reduced);
            out.extend(resolve_clusters(&reduced, approx)?);
        }
        let total: usize = out.iter().map(|(_, m)| m).sum();
        if total != degree {
            return Err(Error::RootFindingFailure {
                degree,
                residual: f64::NAN,
            });
        }
        out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
        Ok(out)
    }

    /// Roots listed with repetition.
    pub fn roots_flat(&self) -> Result<Vec<Complex64>> {
        Ok(self
            .roots()?
            .into_iter()
            .flat_map(|(z, m)| std::iter::repeat_n(z, m))
            .collect())
    }
}

/// Cauchy-style bound on the root moduli.
fn root_radius(p: &Polynomial) -> f64 {
    let n = p.degree().unwrap_or(0);
    let lead = p.coeff(n).norm();
    (0..n)
        .map(|i| (p.coeff(i).norm() / lead).powf(1.0 / (n - i) as f64))
        .fold(0.0, f64::max)
        * 2.0
}

fn aberth(p: &Polynomial) -> Vec<Complex64> {
    let n = p.degree().expect("nonzero polynomial");
    if n == 1 {
        return vec![-p.coeff(0) / p.coeff(1)];
    }
    let lead = p.coeff(n).norm();
    let c0 = p.coeff(0).norm();
    // start on a circle of the geometric-mean radius
    let radius = if c0 > 0.0 {
        (c0 / lead).powf(1.0 / n as f64)
    } else {
        root_radius(p).max(1.0)
    };
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, TAU * k as f64 / n as f64 + 0.4))
        .collect();
    for _ in 0..ABERTH_MAX_ITERS {
        let mut converged = true;
        for i in 0..n {
            let (v, dv) = p.eval_with_derivative(z[i]);
            if v == ZERO {
                continue;
            }
            let ratio = v / dv;
            let mut s = ZERO;
            for (j, zj) in z.iter().enumerate() {
                if j != i {
                    s += (z[i] - zj).inv();
                }
            }
            let step = ratio / (ONE - ratio * s);
            if !step.re.is_finite() || !step.im.is_finite() {
                continue;
            }
            z[i] -= step;
            if step.norm() > 1e-15 * z[i].norm() {
                converged = false;
            }
        }
        if converged {
            break;
        }
    }
    z
}

/// Taylor coefficients `p^(j)(c)/j!` for `j < m`, together with their scales.
fn taylor_at(p: &Polynomial, c: Complex64, m: usize) -> Vec<(Complex64, f64)> {
    let shifted = p.taylor_shift(c);
    let r = c.norm();
    (0..m)
        .map(|j| {
            let scale: f64 = p
                .coeffs()
                .iter()
                .enumerate()
                .skip(j)
                .map(|(i, a)| a.norm() * binomial(i, j) * r.powi((i - j) as i32))
                .sum();
            (shifted.coeff(j), scale)
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn newton(p: &Polynomial, mut z: Complex64) -> Complex64 {
    for _ in 0..POLISH_ITERS {
        let (v, dv) = p.eval_with_derivative(z);
        if v == ZERO || dv == ZERO {
            break;
        }
        let step = v / dv;
        if !(step.re.is_finite() && step.im.is_finite()) {
            break;
        }
        z -= step;
        if step.norm() <= 2.0 * f64::EPSILON * z.norm() {
            break;
        }
    }
    z
}

fn resolve_clusters(p: &Polynomial, approx: Vec<Complex64>) -> Result<Vec<(Complex64, usize)>> {
    let n = approx.len();
    let floor = 1e-7 * root_radius(p);
    // single-linkage clustering
    let mut group: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let link = CLUSTER_REL * approx[i].norm().max(approx[j].norm()) + floor;
            if (approx[i] - approx[j]).norm() <= link {
                let (gi, gj) = (group[i], group[j]);
                if gi != gj {
                    for g in group.iter_mut() {
                        if *g == gj {
                            *g = gi;
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut seen = vec![false; n];
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&j| group[j] == group[i]).collect();
        for &j in &members {
            seen[j] = true;
        }
        let m = members.len();
        let centroid = members.iter().map(|&j| approx[j]).sum::<Complex64>() / m as f64;
        let genuine = m == 1 || {
            let taylor = taylor_at(p, centroid, m + 1);
            let lead = taylor[m].0.norm();
            // spread an m-fold root acquires from rounding alone
            let noise = (ROUNDOFF_SPREAD * taylor[0].1 / lead.max(f64::MIN_POSITIVE)).powf(1.0 / m as f64);
            let radius = members
                .iter()
                .map(|&j| (approx[j] - centroid).norm())
                .fold(0.0, f64::max);
            radius <= noise
                || taylor[..m]
                    .iter()
                    .all(|(t, scale)| t.norm() <= CLUSTER_TAYLOR_TOL * scale)
        };
        if genuine {
            let mut target = p.clone();
            for _ in 1..m {
                target = target.derivative();
            }
            out.push((polish(p, &target, centroid)?, m));
        } else {
            for &j in &members {
                out.push((polish(p, p, approx[j])?, 1));
            }
        }
    }
    Ok(out)
}

fn polish(p: &Polynomial, target: &Polynomial, z0: Complex64) -> Result<Complex64> {
    let z = newton(target, z0);
    let candidate = if (z - z0).norm() <= 1e-3 * (1.0 + z0.norm()) {
        z
    } else {
        z0
    };
    let scale = p.magnitude_at(candidate);
    let residual = p.eval(candidate).norm();
    if residual > BACKWARD_ERROR_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::RootFindingFailure {
            degree: p.degree().unwrap_or(0),
            residual: residual / scale,
        });
    }
    Ok(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poly(re: &[f64]) -> Polynomial {
        Polynomial::new(re.iter().map(|&x| c(x, 0.0)).collect())
    }

    #[test]
    fn simple_quadratic_roots() {
        let roots = poly(&[-2.0, -1.0, 1.0]).roots().unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0].0 - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((roots[1].0 - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn multiple_roots_at_origin_and_elsewhere() {
        let roots = poly(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 8.0]).roots().unwrap();
        assert_eq!(roots, vec![(c(0.0, 0.0), 7)]);

        // (z - 1)^3 (z + 2)
        let p = poly(&[-1.0, 1.0])
            .mul(&poly(&[-1.0, 1.0]))
            .mul(&poly(&[-1.0, 1.0]))
            .mul(&poly(&[2.0, 1.0]));
        let roots = p.roots().unwrap();
        assert_eq!(roots.len(), 2);
        assert_eq!(roots[1].1, 3);
        assert!((roots[1].0 - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn close_but_distinct_roots_stay_separate() {
        // z^2 - 1e-7 has roots ±3.16e-4
        let roots = poly(&[-1e-7, 0.0, 1.0]).roots().unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[1].0.re - 1e-7f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tiny_root_keeps_relative_precision() {
        let t = 1e-80;
        let roots = poly(&[-t, 4.0, 1.0]).roots().unwrap();
        let small = roots.iter().find(|r| r.0.norm() < 1.0).unwrap().0;
        assert!((small.re / (t / 4.0) - 1.0).abs() < 1e-12, "{small}");
    }

    #[test]
    fn taylor_shift_matches_evaluation() {
        let p = Polynomial::new(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0), c(2.0, 0.0)]);
        let s = c(0.7, -1.3);
        let q = p.taylor_shift(s);
        for z in [c(0.0, 0.0), c(1.0, 1.0), c(-2.0, 0.3)] {
            assert!((q.eval(z) - p.eval(z + s)).norm() < 1e-12);
        }
    }

    #[test]
    fn homogeneous_substitution() {
        // z^2 - 2 homogenized at degree 2, with X = u + 2, Y = 1 -> (u + 2)^2 - 2
        let p = poly(&[-2.0, 0.0, 1.0]);
        let q = p.homogeneous_substitute(2, &poly(&[2.0, 1.0]), &poly(&[1.0]));
        assert_eq!(q, poly(&[2.0, 4.0, 1.0]));
    }

    #[test]
    fn random_roots_reproduced() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let deg = rng.gen_range(1..9);
            let truth: Vec<Complex64> = (0..deg)
                .map(|_| c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
                .collect();
            let p = truth.iter().fold(Polynomial::constant(ONE), |acc, r| {
                acc.mul(&Polynomial::linear(ONE, -r))
            });
            let found = p.roots_flat().unwrap();
            for r in &truth {
                let best = found.iter().map(|f| (f - r).norm()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-8, "missing root {r}");
            }
        }
    }
}
