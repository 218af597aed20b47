use zcp::baselines::{IpmModel, Predictor};
use zcp::calibrate::{fit_classification, CostConfig, ZcpModel};
use zcp::eval::{classes_of_zonotope, CLASS_TOL};
use zcp::mlp::{train, TrainConfig};
use zcp::lp::MilpOptions;
use zcp::outliers::{fit_zcp, OutlierMethod};
use zcp::placement::place_orand;
use zcp::sweep::{prepare_data, DataConfig};

fn data(name: &str) -> (zcp::data::Dataset, zcp::data::Dataset, zcp::data::Dataset) {
    prepare_data(&DataConfig { name: name.into(), n_train: 150, n_cal: 40, n_test: 40, seed: 9 }).unwrap()
}

#[test]
fn regression_model_survives_disk_round_trip() {
    let (tr, cal, test) = data("sd-r1");
    let net = train(&tr, &[12, 12], &TrainConfig { epochs: 300, ..TrainConfig::default() }).unwrap();
    let placement = place_orand(&net, 0.1, 4).unwrap();
    let cost = CostConfig::rotated_interval(3, 2);
    let (model, res) = fit_zcp(&net, &placement, &cal, &cost, 2, OutlierMethod::Greedy, &MilpOptions::default()).unwrap();
    assert_eq!(res.removed.len(), 2);
    let misses = model.audit(&cal, 1e-7).unwrap();
    assert!(misses.is_empty(), "{misses:?}");
    assert_eq!(model.removed.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let back = ZcpModel::load(&path).unwrap();
    assert_eq!(back, model);

    // The box hull always contains the zonotope.
    let ipm = IpmModel::from_zcp(model.clone()).unwrap();
    for m in 0..test.len() {
        let z = model.prediction_set(&test.x(m)).unwrap();
        let b = ipm.prediction_set(&test.x(m)).unwrap();
        assert!(z.volume().unwrap() <= b.volume().unwrap() + 1e-9);
    }
}

#[test]
fn classification_sets_cover_every_calibration_label() {
    let (tr, cal, _) = data("sd-c1");
    let net = train(&tr, &[10, 10], &TrainConfig { epochs: 300, ..TrainConfig::default() }).unwrap();
    let placement = place_orand(&net, 0.1, 1).unwrap();
    let model = fit_classification(&net, &placement, &cal, &CostConfig::interval()).unwrap();
    let p = Predictor::Zcp(model.clone());
    for m in 0..cal.len() {
        let z = model.prediction_set(&cal.x(m)).unwrap();
        let classes = classes_of_zonotope(&z, CLASS_TOL).unwrap();
        assert!(cal.classes(m).iter().all(|c| classes.contains(c)), "point {m}: {classes:?}");
        assert_eq!(p.classes(&cal.x(m)).unwrap(), classes);
    }
}
