use cdrodeo::estimator::MarginalValues;
use cdrodeo::marginal::{chained_marginal, kernel_preestimate, marginal_values, AuxSample, MarginalSource};
use cdrodeo::models::{marginal_density, sample_model, Model, ModelSpec};
use cdrodeo::rng::CounterRng;
use cdrodeo::rodeo::{run_revdir, RodeoConfig};
use cdrodeo::{Error, EvalPoint, Kernel, Sample};

#[test]
fn chained_with_one_coordinate_is_a_density_run() {
    let spec = ModelSpec::new(Model::B, 1, 5).unwrap();
    let sample = sample_model(&spec, 250).unwrap();
    let config = RodeoConfig::default();
    let chained = chained_marginal(&sample, &config, None).unwrap();
    let uni = Sample::univariate(sample.column(0)).unwrap();
    let unit = MarginalValues::unit(uni.n());
    let direct: Vec<f64> = (0..uni.n())
        .map(|i| {
            let r = run_revdir(&uni, &unit, &EvalPoint::new(uni.row(i).to_vec()).unwrap(), &config).unwrap();
            assert_eq!(r.a, -1.0);
            r.estimate
        })
        .collect();
    let direct = MarginalValues::new(direct).unwrap();
    for (a, b) in chained.values().iter().zip(direct.values()) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
}

#[test]
fn chained_tracks_the_true_marginal() {
    let spec = ModelSpec::new(Model::C, 2, 6).unwrap();
    let sample = sample_model(&spec, 2_000).unwrap();
    let m = chained_marginal(&sample, &RodeoConfig::default(), None).unwrap();
    let interior: Vec<f64> = (0..sample.n())
        .filter(|&i| sample.x(i).iter().all(|v| v.abs() < 0.6))
        .map(|i| m.values()[i])
        .collect();
    let avg = interior.iter().sum::<f64>() / interior.len() as f64;
    assert!((avg - 0.25).abs() < 0.05, "{avg}");
}

#[test]
fn preestimator_on_normal_aux() {
    // h_X = n_X^{-1/2}; sd of the estimate at 0 is √(φ(0) ‖K‖₂² / (n_X h_X)) ≈ 0.019
    let phi0 = 0.398_942_280_401_432_7;
    let sd = (phi0 * 0.5 / std::f64::consts::PI.sqrt() / (100_000.0 * 100_000f64.powf(-0.5))).sqrt();
    let values: Vec<f64> = (0..10u64)
        .map(|s| {
            let aux: Vec<f64> = (0..100_000u64).map(|i| CounterRng::new(40 + s, i).standard_normal()).collect();
            kernel_preestimate(&AuxSample::new(aux, 1).unwrap(), &[0.0], Kernel::Gaussian, 2.0).unwrap()
        })
        .collect();
    for v in &values {
        assert!((v - phi0).abs() < 4.0 * sd, "{v}");
    }
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    assert!((avg - phi0).abs() < 0.02, "{avg}");
}

#[test]
fn preestimator_against_model_marginal() {
    let spec = ModelSpec::new(Model::B, 2, 7).unwrap();
    let sample = sample_model(&spec, 300).unwrap();
    let aux_sample = sample_model(&spec.reseeded(1), 90_000).unwrap();
    let aux = AuxSample::from_sample(&aux_sample).unwrap();
    let src = MarginalSource::KernelPreestimator { c: 2.0, kernel: Kernel::Gaussian };
    let m = marginal_values(&sample, &src, Some(&aux)).unwrap();
    let floor = MarginalValues::floor(300);
    let mut worst: f64 = 0.0;
    for i in 0..sample.n() {
        let truth = marginal_density(&spec, sample.x(i)).unwrap().max(floor);
        worst = worst.max((m.values()[i] - truth).abs());
    }
    assert!(worst < 0.03, "{worst}");
}

#[test]
fn stage_errors_name_the_stage() {
    let spec = ModelSpec::new(Model::B, 2, 8).unwrap();
    let sample = sample_model(&spec, 50).unwrap();
    let bad = RodeoConfig { beta: 1.5, ..RodeoConfig::default() };
    match chained_marginal(&sample, &bad, None) {
        Err(Error::Stage { stage: 1, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
}
