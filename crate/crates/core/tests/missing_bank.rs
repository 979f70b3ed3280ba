use std::collections::BTreeSet;

use freqloc::error::Error;
use freqloc::features::{extract, featurize_dataset, FeatureConfig};
use freqloc::grid::{build_ieee39, generate_dataset, Dataset, DatasetSpec, MagnitudeSpec, ModelOverrides, SimConfig};
use freqloc::localizer::{predict, train_localizer};
use freqloc::magnitude::estimate_magnitude;
use freqloc::missing::{binomial, build_bank, predict_with_missing, BankSettings, MissingMask};
use freqloc::optim::OptimizerSettings;

fn dataset(buses: &[usize], seed: u64) -> Dataset {
    let model = build_ieee39(&ModelOverrides::default()).unwrap();
    let spec = DatasetSpec {
        buses: buses.to_vec(),
        magnitudes: MagnitudeSpec::Grid {
            start: 100.0,
            stop: 1000.0,
            step: 150.0,
        },
        no_disturbance: 0,
        seed,
    };
    generate_dataset(&model, &spec, &SimConfig::default()).unwrap()
}

fn settings() -> BankSettings {
    BankSettings {
        bus_count: 39,
        lambda: 0.01,
        optimizer: OptimizerSettings::default(),
        magnitude: Default::default(),
    }
}

fn all_generators() -> BTreeSet<usize> {
    (1..=10).collect()
}

#[test]
fn bank_sizes_follow_binomial_sums() {
    let ds = dataset(&[4, 16], 1);
    let cfg = FeatureConfig::new(10, 1, 0.0, 7);
    for (k, want) in [(0, 1), (1, 11), (2, 56)] {
        let bank = build_bank(&ds, &cfg, k, &settings()).unwrap();
        assert_eq!(bank.localizers.len(), want, "k_max {k}");
        assert_eq!(bank.magnitude_banks.len(), want);
        assert_eq!(bank.expected_entries(), want);
        assert_eq!((0..=k).map(|j| binomial(10, j)).sum::<usize>(), want);
        for mask in MissingMask::enumerate(10, k) {
            assert!(bank.models_for(&mask).is_ok(), "mask {mask}");
        }
    }
}

#[test]
fn k_max_must_leave_a_generator() {
    let ds = dataset(&[4], 1);
    let err = build_bank(&ds, &FeatureConfig::new(5, 1, 0.0, 7), 10, &settings()).unwrap_err();
    assert!(matches!(err, Error::Config { .. }), "{err}");
}

#[test]
fn lookups_are_canonical_and_budgeted() {
    let ds = dataset(&[4, 16, 21], 1);
    let cfg = FeatureConfig::new(10, 1, 0.0, 7);
    let bank = build_bank(&ds, &cfg, 2, &settings()).unwrap();
    let a = bank.models_for(&MissingMask::new([3, 7])).unwrap().0;
    let b = bank.models_for(&MissingMask::new([7, 3])).unwrap().0;
    assert!(std::ptr::eq(a, b));

    let trace = &ds.traces[5];
    let without = |ids: &[usize]| -> BTreeSet<usize> { all_generators().into_iter().filter(|g| !ids.contains(g)).collect() };
    let p37 = predict_with_missing(&bank, trace, &without(&[3, 7])).unwrap();
    let p73 = predict_with_missing(&bank, trace, &without(&[7, 3])).unwrap();
    assert_eq!(p37, p73);

    match predict_with_missing(&bank, trace, &without(&[1, 2, 3])).unwrap_err() {
        Error::BudgetExceeded { missing, k_max } => assert_eq!((missing, k_max), (3, 2)),
        other => panic!("{other}"),
    }
}

#[test]
fn two_missing_with_budget_one_is_rejected() {
    let ds = dataset(&[4, 16], 1);
    let bank = build_bank(&ds, &FeatureConfig::new(5, 1, 0.0, 7), 1, &settings()).unwrap();
    let observed: BTreeSet<usize> = (3..=10).collect();
    let err = predict_with_missing(&bank, &ds.traces[0], &observed).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { missing: 2, k_max: 1 }), "{err}");
}

#[test]
fn all_observed_matches_the_plain_pipeline() {
    let ds = dataset(&[4, 16, 21], 1);
    let cfg = FeatureConfig::new(10, 1, 0.0, 7);
    let bank = build_bank(&ds, &cfg, 1, &settings()).unwrap();
    let samples = featurize_dataset(&ds, &cfg, &MissingMask::none()).unwrap();
    let plain = train_localizer(&samples, 39, settings().lambda, &settings().optimizer).unwrap();
    assert_eq!(&plain, bank.models_for(&MissingMask::none()).unwrap().0);
    for trace in ds.traces.iter().step_by(4) {
        let (p, mw) = predict_with_missing(&bank, trace, &all_generators()).unwrap();
        let x = extract(trace, &cfg, &MissingMask::none()).unwrap();
        let direct = predict(&plain, &x).unwrap();
        assert_eq!(p, direct);
        let mags = bank.models_for(&MissingMask::none()).unwrap().1;
        if direct.predicted_class != 0 {
            assert_eq!(mw, estimate_magnitude(mags, direct.predicted_class, &MissingMask::none(), &x).unwrap());
        }
    }
}

#[test]
fn one_missing_generator_shortens_the_features() {
    let ds = dataset(&[4, 16], 1);
    let cfg = FeatureConfig::new(200, 100, 0.005, 7);
    let mask = MissingMask::new([3]);
    let samples = featurize_dataset(&ds, &cfg, &mask).unwrap();
    assert!(samples.iter().all(|s| s.features.len() == 910));
    assert_eq!(cfg.feature_len(9), (200 - 100 + 1) * 9 + 1);

    let bank = build_bank(&ds, &cfg, 1, &settings()).unwrap();
    let (loc, mags) = bank.models_for(&mask).unwrap();
    assert_eq!(loc.feature_len(), 910);
    assert!(mags.models.values().all(|a| a.len() == 910));
    let observed: BTreeSet<usize> = all_generators().into_iter().filter(|&g| g != 3).collect();
    assert!(predict_with_missing(&bank, &ds.traces[0], &observed).is_ok());
}
