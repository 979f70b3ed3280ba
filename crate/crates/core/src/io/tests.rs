use super::*;
use crate::grid::{build_ieee39, generate_dataset, DatasetSpec, MagnitudeSpec, ModelOverrides, SimConfig};
use proptest::prelude::*;

fn small_dataset() -> (Dataset, String) {
    let model = build_ieee39(&ModelOverrides::default()).unwrap();
    let sim = SimConfig {
        duration: 0.05,
        ..SimConfig::default()
    };
    let spec = DatasetSpec {
        buses: vec![4, 16],
        magnitudes: MagnitudeSpec::List {
            values: vec![150.0, 333.3],
        },
        no_disturbance: 1,
        seed: 9,
    };
    (generate_dataset(&model, &spec, &sim).unwrap(), model.content_hash())
}

fn config() -> FeatureConfig {
    FeatureConfig::new(4, 2, 0.001, 11)
}

fn model_with(values: &[f64], rows: usize, cols: usize, mask: MissingMask) -> LogisticModel {
    LogisticModel {
        coefficients: DMatrix::from_row_slice(rows, cols, values),
        class_labels: (0..rows).map(ClassLabel::from_index).collect(),
        feature_config: config(),
        missing_mask: mask,
        lambda: 10.0,
    }
}

#[test]
fn traces_round_trip_exactly() {
    let (ds, hash) = small_dataset();
    let text = traces_to_string(&ds, &hash).unwrap();
    let (back, header) = traces_from_str("t", &text).unwrap();
    assert_eq!(back, ds);
    assert_eq!(header.model_hash, hash);
    assert_eq!(header.generators, 10);
    assert_eq!(back.traces[4].scenario.bus(), None);
}

#[test]
fn truncated_trace_file_is_rejected() {
    let (ds, hash) = small_dataset();
    let text = traces_to_string(&ds, &hash).unwrap();
    let cut: Vec<&str> = text.lines().collect();
    let cut = cut[..cut.len() - 1].join("\n");
    let err = traces_from_str("t", &cut).unwrap_err();
    assert!(err.to_string().contains("samples"), "{err}");
}

#[test]
fn wrong_marker_names_the_line() {
    match traces_from_str("x.txt", "# something else\n").unwrap_err() {
        Error::Parse { file, line, .. } => {
            assert_eq!(file, "x.txt");
            assert_eq!(line, 1);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn bad_number_is_a_parse_error() {
    let (ds, hash) = small_dataset();
    let text = traces_to_string(&ds, &hash).unwrap().replacen(",150,", ",15O,", 1);
    assert!(matches!(traces_from_str("t", &text).unwrap_err(), Error::Parse { .. }));
}

#[test]
fn feature_matrix_round_trips() {
    let (ds, _) = small_dataset();
    let mask = MissingMask::new([2, 5]);
    let samples = crate::features::featurize_dataset(&ds, &config(), &mask).unwrap();
    let text = samples_to_string(&samples).unwrap();
    assert_eq!(samples_from_str("f", &text).unwrap(), samples);
}

#[test]
fn magnitude_bank_round_trips() {
    let mut bank = LinearModelBank::new(config());
    bank.insert(4, MissingMask::none(), vec![1.5, -2.25e-7, 3.0]);
    bank.insert(16, MissingMask::new([3, 7]), vec![0.1, 1e300]);
    let text = magnitude_bank_to_string(&bank);
    assert_eq!(magnitude_bank_from_str("m", &text).unwrap(), bank);
}

#[test]
fn bank_directory_round_trip_and_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let mut localizers = BTreeMap::new();
    let mut magnitude_banks = BTreeMap::new();
    // N = 3, k_max = 1: masks none, 1, 2, 3
    for mask in MissingMask::enumerate(3, 1) {
        let l = config().feature_len(mask.observed_count(3));
        let m = model_with(&vec![0.5; 3 * l], 3, l, mask.clone());
        localizers.insert(mask.clone(), m);
        let mut mb = LinearModelBank::new(config());
        mb.insert(1, mask.clone(), vec![2.0; l]);
        magnitude_banks.insert(mask, mb);
    }
    let bank = ScenarioBank {
        localizers,
        magnitude_banks,
        k_max: 1,
        generator_count: 3,
        feature_config: config(),
    };
    write_bank_dir(dir.path(), &bank).unwrap();
    assert!(dir.path().join("mask-none.loc").exists());
    assert!(dir.path().join("mask-2.mag").exists());
    assert_eq!(read_bank_dir(dir.path()).unwrap(), bank);

    let victim = dir.path().join("mask-3.loc");
    let text = fs::read_to_string(&victim).unwrap().replace("0.5", "0.25");
    fs::write(&victim, text).unwrap();
    let err = read_bank_dir(dir.path()).unwrap_err();
    assert!(err.to_string().contains("checksum"), "{err}");
}

#[test]
fn missing_bank_index_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    match read_bank_dir(dir.path()).unwrap_err() {
        Error::Io { path, .. } => assert!(path.ends_with(BANK_INDEX)),
        other => panic!("{other}"),
    }
}

proptest! {
    #[test]
    fn localizer_text_round_trips(
        values in proptest::collection::vec(-1e6f64..1e6, 3 * 5),
        tiny in -1e-300f64..1e-300,
    ) {
        let mut values = values;
        values[0] = tiny;
        let m = model_with(&values, 3, 5, MissingMask::new([1, 2, 3, 4, 5, 6, 7, 8, 9]));
        let m = LogisticModel { feature_config: FeatureConfig::new(4, 2, 0.001, 11), ..m };
        let text = localizer_to_string(&m);
        prop_assert_eq!(localizer_from_str("l", &text).unwrap(), m);
    }

    #[test]
    fn feature_values_round_trip(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..30)) {
        let mut values = values;
        *values.last_mut().unwrap() = 1.0;
        let s = LabeledSample {
            scenario_id: 3,
            features: FeatureVector { values, config: config(), mask: MissingMask::none() },
            label_index: 7,
            magnitude: 123.456,
        };
        let text = samples_to_string(std::slice::from_ref(&s)).unwrap();
        prop_assert_eq!(samples_from_str("f", &text).unwrap(), vec![s]);
    }
}
