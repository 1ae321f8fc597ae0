use pullback_lab::certify::{classify_run, first_certificate, verify_certificate, Classification};
use pullback_lab::corpus::demo_corpus;
use pullback_lab::fiber::{compose_iterate_run, parse_trace, PullbackRun, RunStatus};
use pullback_lab::ratmap::FixedKind;
use pullback_lab::{SpherePoint, Tolerances};

fn corpus_runs() -> Vec<(&'static str, PullbackRun)> {
    demo_corpus()
        .into_iter()
        .map(|d| {
            let mut run = compose_iterate_run(&d.spec, d.iterate, &Tolerances::default()).unwrap();
            run.run_until(&d.stop).unwrap();
            (d.name, run)
        })
        .collect()
}

#[test]
fn step_bounds_contract_up_to_slack() {
    for (name, run) in corpus_runs() {
        let bounds: Vec<f64> = (1..=run.step()).map(|n| run.step_bound(n).unwrap()).collect();
        for (n, pair) in bounds.windows(2).enumerate() {
            assert!(
                pair[1] <= pair[0] * 1.05 + 1e-300,
                "{name}: step {} bound {} after {}",
                n + 2,
                pair[1],
                pair[0]
            );
        }
    }
}

#[test]
fn every_run_gets_exactly_one_verdict() {
    for (name, run) in corpus_runs() {
        let status = run.detect().unwrap_or(RunStatus::Undecided);
        let verdict = classify_run(&run, &status);
        match (&status, &verdict) {
            (RunStatus::CandidateRealized, Classification::Realized { points }) => {
                for p in points {
                    assert!(p.residual < 1e-8, "{name}");
                }
            }
            (RunStatus::CandidatePuncture { .. }, Classification::Obstructed { multiplier, .. }) => {
                assert!(multiplier.norm() > 1.0 + 1e-9, "{name}");
            }
            other => panic!("{name}: {other:?}"),
        }
    }
}

#[test]
fn traces_are_deterministic_and_replayable() {
    let first = corpus_runs();
    let second = corpus_runs();
    for ((name, a), (_, b)) in first.iter().zip(second.iter()) {
        let bytes = a.trace_bytes();
        assert_eq!(bytes, b.trace_bytes(), "{name}");
        let (header, records) = parse_trace(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(header.spec, *a.spec());
        assert_eq!(records.as_slice(), a.records());
    }
}

#[test]
fn emitted_certificates_verify() {
    let (_, run) = corpus_runs().into_iter().find(|(n, _)| *n == "chebyshev").unwrap();
    let cert = first_certificate(&run, None).unwrap().expect("certificate");
    assert!(verify_certificate(&cert, &run, None).ok);
    let json = serde_json::to_string(&cert).unwrap();
    let back = serde_json::from_str(&json).unwrap();
    assert_eq!(cert, back);
}

#[test]
fn corpus_maps_have_consistent_dynamics() {
    let tol = Tolerances::default();
    for d in demo_corpus() {
        let g = d.spec.map.iterate(d.iterate);
        let analysis = g.postsingular_analysis(&d.spec.declared, &tol).unwrap();
        assert!(analysis.is_psf);
        for (i, (_, p)) in analysis.postsingular.entries().iter().enumerate() {
            let image = analysis.postsingular.entries()[analysis.image[i]].1;
            assert!(g.eval(*p).chordal(&image) < tol.eps_cycle, "{}", d.name);
        }
        for fp in g.fixed_points(None, &tol).unwrap() {
            assert!(g.eval(fp.location).chordal(&fp.location) < 1e-9);
            assert!(
                matches!(fp.kind, FixedKind::Superattracting | FixedKind::Repelling),
                "{}: {:?}",
                d.name,
                fp
            );
        }
        for w in [SpherePoint::new(0.3, -0.7), SpherePoint::real(5.0)] {
            for (z, _) in g.preimages(w).unwrap() {
                assert!(g.eval(z).chordal(&w) < 1e-9);
            }
        }
    }
}
