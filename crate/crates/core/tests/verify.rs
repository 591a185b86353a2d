use mgw::spectra::fixtures;
use mgw::verify::stats::{ks_statistic, quantile};
use mgw::verify::{Experiment, ExperimentConfig, Tolerance, Verdict};
use mgw::{Error, OffspringModel};

fn small(exp: Experiment) -> (OffspringModel, ExperimentConfig) {
    let base = ExperimentConfig {
        n: 200,
        reps: 64,
        seed: 17,
        s: 0.5,
        h: 20,
        ..ExperimentConfig::default()
    };
    match exp {
        Experiment::SnakeVariance => (
            fixtures::alt2_spatial(),
            ExperimentConfig {
                s2: Some(0.8),
                reference_steps: 500,
                reference_reps: 200,
                ..base
            },
        ),
        Experiment::ConditionedHeight => (fixtures::mono1(), ExperimentConfig { n: 21, ..base }),
        Experiment::BranchFrequency => (
            fixtures::alt2(),
            ExperimentConfig {
                word: vec![1, 1],
                ..base
            },
        ),
        Experiment::ManyToOne => (
            fixtures::three3(),
            ExperimentConfig {
                roots: vec![0, 2],
                h: 6,
                ..base
            },
        ),
        Experiment::HeightFdd => (fixtures::alt2(), ExperimentConfig { n: 50, reps: 1000, ..base }),
        Experiment::LocalLimit => (fixtures::alt2(), ExperimentConfig { j: 1, ..base }),
        _ => (fixtures::alt2(), base),
    }
}

#[test]
fn serial_and_parallel_runs_fingerprint_identically() {
    for exp in Experiment::ALL {
        let (model, cfg) = small(exp);
        let par = exp.run(&model, &cfg).unwrap();
        let ser = exp
            .run(&model, &ExperimentConfig { parallel: false, ..cfg.clone() })
            .unwrap();
        assert_eq!(par.fingerprint(), ser.fingerprint(), "{exp}");
        let again = exp.run(&model, &cfg).unwrap();
        assert_eq!(par.fingerprint(), again.fingerprint(), "{exp}");
        let other = exp.run(&model, &ExperimentConfig { seed: 18, ..cfg.clone() }).unwrap();
        if par.replicates > 1 && !matches!(exp, Experiment::HeightTail | Experiment::LocalLimit) {
            assert_ne!(par.fingerprint(), other.fingerprint(), "{exp}");
        }
    }
}

#[test]
fn time_zero_gives_exact_answers() {
    let model = fixtures::alt2();
    let cfg = ExperimentConfig {
        n: 500,
        reps: 50,
        s: 0.0,
        ..ExperimentConfig::default()
    };
    let r = Experiment::HeightFdd.run(&model, &cfg).unwrap();
    assert_eq!(r.statistic("max_sample").unwrap().estimate, 0.0);
    assert_eq!(r.verdict, Verdict::Pass);
    let r = Experiment::TypeFrequency.run(&model, &cfg).unwrap();
    assert!(r.statistics.iter().all(|s| s.estimate == 0.0 && s.target == 0.0 && s.pass));
    let r = Experiment::Upsilon.run(&model, &cfg).unwrap();
    let st = r.statistic("mean").unwrap();
    assert_eq!(st.target, 0.0);
    assert!((st.estimate - 1.0 / (500f64).sqrt()).abs() < 1e-12);
}

#[test]
fn single_type_frequency_is_exactly_s() {
    let cfg = ExperimentConfig {
        n: 1000,
        reps: 20,
        s: 0.37,
        ..ExperimentConfig::default()
    };
    let r = Experiment::TypeFrequency.run(&fixtures::mono1(), &cfg).unwrap();
    let st = r.statistic("lambda_1").unwrap();
    assert!(r.raw.rows.iter().all(|row| row[0] == 370.0 / 1000.0));
    assert!((st.estimate - 0.37).abs() < 1e-15);
}

#[test]
fn words_outside_the_support_have_zero_frequency() {
    let cfg = ExperimentConfig {
        word: vec![0, 1],
        reps: 50,
        h: 100,
        ..ExperimentConfig::default()
    };
    let r = Experiment::BranchFrequency.run(&fixtures::alt2(), &cfg).unwrap();
    let st = r.statistic("frequency").unwrap();
    assert_eq!((st.estimate, st.target), (0.0, 0.0));
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn many_to_one_in_closed_form() {
    let at = |h, roots: Vec<usize>, model: &OffspringModel| {
        let cfg = ExperimentConfig {
            h,
            roots,
            reps: 0,
            ..ExperimentConfig::default()
        };
        Experiment::ManyToOne.run(model, &cfg).unwrap().extras["generation_size_matrix"]
    };
    assert_eq!(at(0, vec![0, 1, 2], &fixtures::three3()), 3.0);
    // in ALT2 a type-1 vertex has two type-2 children of one child each
    assert!((at(2, vec![0], &fixtures::alt2()) - 1.0).abs() < 1e-12);
    assert!((at(1, vec![0], &fixtures::alt2()) - 1.0).abs() < 1e-12);
}

#[test]
fn tail_diagnostics_never_fail() {
    let cfg = ExperimentConfig {
        n: 400,
        reps: 40,
        ..ExperimentConfig::default()
    };
    let r = Experiment::TailDiagnostics.run(&fixtures::alt2(), &cfg).unwrap();
    assert_ne!(r.verdict, Verdict::Fail);
    assert!(r.statistics.iter().all(|s| s.diagnostic));
    let forced = Experiment::TailDiagnostics
        .run(&fixtures::alt2(), &ExperimentConfig { eta: 0.0, ..cfg })
        .unwrap();
    assert_eq!(forced.verdict, Verdict::Inconclusive);
}

#[test]
fn estimator_spread_shrinks_with_the_sample() {
    let spread = |reps| {
        let cfg = ExperimentConfig {
            n: 100,
            reps,
            i: 0,
            ..ExperimentConfig::default()
        };
        Experiment::Projection.run(&fixtures::three3(), &cfg).unwrap().statistic("offspring_mean").unwrap().std_error
    };
    let (a, b) = (spread(1000), spread(16_000));
    assert!(b < a / 2.5, "{a} {b}");
}

#[test]
fn ks_needs_enough_samples() {
    let xs: Vec<f64> = (0..999).map(|k| k as f64).collect();
    assert!(matches!(ks_statistic(&xs, |x| x), Err(Error::InsufficientSamples(_))));
    let cfg = ExperimentConfig {
        n: 100,
        reps: 999,
        ..ExperimentConfig::default()
    };
    assert!(matches!(
        Experiment::HeightFdd.run(&fixtures::mono1(), &cfg),
        Err(Error::InsufficientSamples(_))
    ));
    assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
}

#[test]
fn reports_serialize_their_tolerances() {
    let (model, cfg) = small(Experiment::Projection);
    let r = Experiment::Projection.run(&model, &cfg).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["name"], "projection");
    assert!(v.get("raw").is_none());
    assert_eq!(v["statistics"][0]["tolerance"]["kind"], "std_errors");
    assert!(matches!(r.statistics[0].tolerance, Tolerance::StdErrors(_)));
    assert_eq!(r.raw.rows.len(), r.replicates - r.cap_exceeded_count as usize);
}

#[test]
fn subcritical_models_are_rejected() {
    let model = OffspringModel::from_f64(vec![vec![(vec![0, 0], 0.3), (vec![], 0.7)]]).unwrap();
    let r = Experiment::HeightFdd.run(&model, &ExperimentConfig::default());
    assert!(matches!(r, Err(Error::NotCritical(_))), "{r:?}");
}
