use std::f64::consts::PI;

use proptest::prelude::*;
use pullback_lab::hyperbolic::{DensityBound, RoundAnnulus};
use pullback_lab::lifting::{closure_gap, Lifter, Path};
use pullback_lab::sphere::{forget_coordinates, mobius_from_triples, normalize_configuration};
use pullback_lab::{Complex64, Configuration, MobiusTransform, RationalMap, SpherePoint, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn complex(range: f64) -> impl Strategy<Value = Complex64> {
    (-range..range, -range..range).prop_map(|(a, b)| c(a, b))
}

fn mobius() -> impl Strategy<Value = MobiusTransform> {
    (complex(2.0), complex(2.0), complex(2.0), complex(2.0)).prop_filter_map("degenerate", |(a, b, cc, d)| {
        MobiusTransform::new(a, b, cc, d, 1e-12)
            .ok()
            .filter(|m| m.det().norm() > 0.1)
    })
}

fn distinct(points: &[Complex64], gap: f64) -> bool {
    points
        .iter()
        .enumerate()
        .all(|(i, p)| points[i + 1..].iter().all(|q| (p - q).norm() > gap))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triple_map_round_trips(m in mobius(), p in prop::array::uniform3(complex(3.0))) {
        prop_assume!(distinct(&p, 0.3));
        let tol = Tolerances::default();
        let ps = p.map(SpherePoint::Finite);
        let qs = ps.map(|z| m.apply(z));
        prop_assume!(qs.iter().all(|q| q.finite().map(|z| z.norm() < 1e3).unwrap_or(false)));
        let found = mobius_from_triples(ps, qs, &tol).unwrap();
        for (pi, qi) in ps.iter().zip(qs.iter()) {
            prop_assert!(found.apply(*pi).chordal(qi) < 1e-12);
        }
    }

    #[test]
    fn normalization_is_mobius_invariant(m in mobius(), pts in prop::array::uniform5(complex(3.0))) {
        prop_assume!(distinct(&pts, 0.3));
        let tol = Tolerances::default();
        let sp: Vec<SpherePoint> = pts.iter().map(|z| SpherePoint::Finite(*z)).collect();
        let moved: Vec<SpherePoint> = sp.iter().map(|z| m.apply(*z)).collect();
        let (Ok(a), Ok(b)) = (
            Configuration::from_points("p", &sp, &tol),
            Configuration::from_points("p", &moved, &tol),
        ) else {
            return Err(TestCaseError::reject("collision"));
        };
        let anchors = ["p0", "p1", "p2"];
        let na = normalize_configuration(&a, anchors, &tol).unwrap();
        let nb = normalize_configuration(&b, anchors, &tol).unwrap();
        for (x, y) in na.coords.iter().zip(nb.coords.iter()) {
            prop_assert!((x - y).norm() <= 1e-10 * x.norm().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn forgetting_commutes_with_normalization(pts in prop::array::uniform6(complex(3.0))) {
        prop_assume!(distinct(&pts, 0.1));
        let tol = Tolerances::default();
        let sp: Vec<SpherePoint> = pts.iter().map(|z| SpherePoint::Finite(*z)).collect();
        let config = Configuration::from_points("p", &sp, &tol).unwrap();
        let anchors = ["p0", "p1", "p2"];
        let keep = ["p0", "p1", "p2", "p4"];
        let left = forget_coordinates(&normalize_configuration(&config, anchors, &tol).unwrap(), &keep).unwrap();
        let right = normalize_configuration(&config.forget(&keep).unwrap(), anchors, &tol).unwrap();
        prop_assert_eq!(&left.labels, &right.labels);
        for (x, y) in left.coords.iter().zip(right.coords.iter()) {
            prop_assert!((x - y).norm() <= 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn annulus_modulus_is_transport_invariant(
        center in complex(5.0),
        r_in in 1e-3..1.0f64,
        ratio in 1.01..1e3f64,
        alpha in complex(4.0),
        beta in complex(4.0),
    ) {
        prop_assume!(alpha.norm() > 1e-2);
        let u = RoundAnnulus::new(center, r_in, r_in * ratio, MobiusTransform::identity()).unwrap();
        let m = MobiusTransform::new(alpha, beta, c(0.0, 0.0), c(1.0, 0.0), 1e-12).unwrap();
        let v = u.transported(&m).unwrap();
        prop_assert!((u.modulus() - v.modulus()).abs() <= 1e-12 * u.modulus().max(1.0));
    }

    #[test]
    fn lifts_are_deterministic_and_accurate(
        cst in prop::sample::select(vec![c(-2.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]),
        pts in prop::collection::vec(complex(2.5), 2..6),
        pick in 0usize..2,
    ) {
        let tol = Tolerances::default();
        let g = RationalMap::quadratic(cst);
        let lifter = Lifter::new(&g, &tol).unwrap();
        let path = Path::new(pts).unwrap();
        prop_assume!(path.len() >= 2);
        let roots = g.preimages(SpherePoint::Finite(path.start())).unwrap();
        let start = roots[pick.min(roots.len() - 1)].0.finite().unwrap();
        if let Ok(first) = lifter.lift_path(&path, start) {
            let second = lifter.lift_path(&path, start).unwrap();
            for (a, b) in first.lifted.nodes().iter().zip(second.lifted.nodes()) {
                prop_assert!((a - b).norm() <= 1e-10);
            }
            prop_assert!(lifter.refined_residual(&first, 10) < 1e-8);
        }
    }

    #[test]
    fn small_loops_close(center in complex(2.0), radius in 1e-3..0.2f64) {
        let tol = Tolerances::default();
        let g = RationalMap::quadratic(c(-2.0, 0.0));
        let lifter = Lifter::new(&g, &tol).unwrap();
        let clear = lifter.critical_values().iter().map(|v| (v - center).norm()).fold(f64::INFINITY, f64::min);
        prop_assume!(clear > 2.0 * radius);
        let lp = Path::circle(center, radius, 24);
        let start = (center + radius + 2.0).sqrt();
        let (lift, closes) = lifter.lift_closed_curve(&lp, start).unwrap();
        prop_assert!(closes);
        prop_assert!(closure_gap(&lift.lifted) < 1e-8);
    }

    #[test]
    fn lift_endpoints_are_homotopy_invariant(a in complex(1.0), b in complex(1.0), bend in complex(0.3)) {
        // z² − 1 has critical values −1 and ∞; stay in Re z > 0
        let shift = c(1.5, 0.0);
        let (a, b) = (a * 0.5 + shift, b * 0.5 + shift);
        prop_assume!((a - b).norm() > 1e-2);
        let tol = Tolerances::default();
        let g = RationalMap::quadratic(c(-1.0, 0.0));
        let lifter = Lifter::new(&g, &tol).unwrap();
        let straight = Path::segment(a, b);
        let bent = Path::new(vec![a, (a + b) * 0.5 + bend, b]).unwrap();
        let start = (a + 1.0).sqrt();
        let x = lifter.lift_path(&straight, start).unwrap();
        let y = lifter.lift_path(&bent, start).unwrap();
        prop_assert!((x.lifted.end() - y.lifted.end()).norm() < 1e-8);
    }
}

#[test]
fn density_matches_the_disk_closed_form() {
    let punctures = [c(0.0, 0.0), c(1.0, 0.0)];
    let bound = DensityBound::new(&punctures);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let p = punctures[rng.gen_range(0..2)];
        let d = rng.gen_range(1e-6..0.99);
        let theta = rng.gen_range(0.0..2.0 * PI);
        let z = p + Complex64::from_polar(d, theta);
        let expected = 1.0 / (d * (1.0 / d).ln());
        let got = bound.at(z).unwrap();
        // the other disk may give a smaller value; never a larger one
        assert!(got <= expected * (1.0 + 1e-12), "{z}: {got} > {expected}");
        let other = punctures.iter().find(|q| **q != p).unwrap();
        let e = (z - other).norm();
        let alternative = if e < 1.0 {
            1.0 / (e * (1.0 / e).ln())
        } else {
            f64::INFINITY
        };
        assert!((got - expected.min(alternative)).abs() <= 1e-12 * got);
    }
}

#[test]
fn path_bound_dominates_fine_quadrature() {
    let bound = DensityBound::new(&[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 2.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = c(rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
        let b = c(rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
        let upper = bound.segment_length(a, b).unwrap();
        let pieces = 20_000;
        let step = (b - a) / pieces as f64;
        let fine: f64 = (0..pieces)
            .map(|j| bound.at(a + step * (j as f64 + 0.5)).unwrap() * step.norm())
            .sum();
        assert!(upper >= fine * (1.0 - 1e-9), "{upper} < {fine}");
        let refined = Path::new(vec![a, (a + b) * 0.5, b]).unwrap();
        assert!(bound.path_length(&refined).unwrap() >= fine * (1.0 - 1e-9));
    }
}

#[test]
fn unit_circle_lift_under_squaring_does_not_close() {
    let tol = Tolerances::default();
    let g = RationalMap::quadratic(c(0.0, 0.0));
    let lifter = Lifter::new(&g, &tol).unwrap();
    let (lift, closes) = lifter
        .lift_closed_curve(&Path::circle(c(0.0, 0.0), 1.0, 64), c(1.0, 0.0))
        .unwrap();
    assert!(!closes);
    assert!((lift.lifted.end() - c(-1.0, 0.0)).norm() < 1e-8);
}
