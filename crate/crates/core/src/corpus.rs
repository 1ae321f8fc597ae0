//! The demo corpus of run configurations.

use num_complex::Complex64;

use crate::fiber::{MarkedSpec, RunSpec, StopCriteria};
use crate::ratmap::RationalMap;
use crate::sphere::SpherePoint;

#[derive(Debug, Clone)]
pub struct DemoRun {
    pub name: &'static str,
    pub spec: RunSpec,
    /// Iterate of the map used by the run (`1` for the map itself).
    pub iterate: usize,
    pub stop: StopCriteria,
}

fn fixed(label: &str, b: Complex64, b1: Complex64) -> MarkedSpec {
    MarkedSpec::Fixed {
        label: label.into(),
        basepoint: SpherePoint::Finite(b),
        branch_point: SpherePoint::Finite(b1),
        delta: None,
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `z² − 2` with the principal branch datum `b = 0`, `b′ = √2`.
pub fn chebyshev() -> RunSpec {
    RunSpec {
        map: RationalMap::quadratic(c(-2.0, 0.0)),
        declared: vec![],
        marked: vec![fixed("x", c(0.0, 0.0), c(2f64.sqrt(), 0.0))],
    }
}

/// `z² − 2` with `b = −1/2`, `b′ = −√1.5`, pulling back along `x ↦ −√(x + 2)`.
pub fn chebyshev_realized() -> RunSpec {
    RunSpec {
        map: RationalMap::quadratic(c(-2.0, 0.0)),
        declared: vec![],
        marked: vec![fixed("x", c(-0.5, 0.0), c(-(1.5f64.sqrt()), 0.0))],
    }
}

/// `z²` with the fixed point 1 declared and the principal square root as branch point.
pub fn squaring(b: Complex64) -> RunSpec {
    RunSpec {
        map: RationalMap::quadratic(c(0.0, 0.0)),
        declared: vec![SpherePoint::real(1.0)],
        marked: vec![fixed("x", b, b.sqrt())],
    }
}

pub fn squaring_basepoints() -> [Complex64; 3] {
    [c(0.5, 0.0), c(0.5, 0.25), c(-1.0 / 3.0, 0.5)]
}

/// `z² − 1` with `b = −0.6`, `b′ = −√0.4`.
pub fn basilica() -> RunSpec {
    basilica_from(c(-0.6, 0.0))
}

/// `z² − 1` with basepoint `b` and `b′ = −√(b + 1)`.
pub fn basilica_from(b: Complex64) -> RunSpec {
    RunSpec {
        map: RationalMap::quadratic(c(-1.0, 0.0)),
        declared: vec![],
        marked: vec![fixed("x", b, -(b + 1.0).sqrt())],
    }
}

/// The realized Chebyshev run with an extra trivial point that jumps to `0 ∈ g⁻¹(−2)`.
pub fn trivial_point() -> RunSpec {
    let mut spec = chebyshev_realized();
    spec.marked.push(MarkedSpec::Trivial {
        label: "t".into(),
        initial: SpherePoint::new(0.3, 0.4),
        image: SpherePoint::real(-2.0),
        preimage: SpherePoint::real(0.0),
    });
    spec
}

pub fn demo_corpus() -> Vec<DemoRun> {
    let stop = StopCriteria::default();
    let mut out = vec![
        DemoRun {
            name: "chebyshev",
            spec: chebyshev(),
            iterate: 1,
            stop: StopCriteria {
                max_iters: 1000,
                min_steps: 140,
            },
        },
        DemoRun {
            name: "chebyshev-realized",
            spec: chebyshev_realized(),
            iterate: 1,
            stop,
        },
    ];
    for (name, b) in ["squaring-a", "squaring-b", "squaring-c"]
        .into_iter()
        .zip(squaring_basepoints())
    {
        out.push(DemoRun {
            name,
            spec: squaring(b),
            iterate: 1,
            stop,
        });
    }
    out.push(DemoRun {
        name: "basilica",
        spec: basilica(),
        iterate: 1,
        stop: StopCriteria {
            max_iters: 200,
            min_steps: 0,
        },
    });
    out.push(DemoRun {
        name: "trivial-point",
        spec: trivial_point(),
        iterate: 1,
        stop,
    });
    out.push(DemoRun {
        name: "iterate-composition",
        spec: chebyshev(),
        iterate: 2,
        stop: StopCriteria {
            max_iters: 500,
            min_steps: 20,
        },
    });
    out
}
