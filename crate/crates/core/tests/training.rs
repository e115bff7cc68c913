use std::f64::consts::PI;

use malaria_forecast::data::{MonthKey, MonthlyRecord};
use malaria_forecast::eval::{persistence_baseline, rmse};
use malaria_forecast::lstm::{read_model, train, write_model, LstmParams, TrainConfig};
use malaria_forecast::math::Rng;
use malaria_forecast::synth::{generate, SynthConfig};
use malaria_forecast::window::{make_windows, split_train_test, Partition, Variant, WindowSpec};

const AMPLITUDE: f64 = 1000.0;

fn sinusoid(n: i64) -> Vec<MonthlyRecord> {
    let start = MonthKey::new(2005, 1).unwrap();
    (0..n)
        .map(|t| MonthlyRecord {
            province: "Wave".into(),
            month: start.offset(t),
            temp_mean: Some(21.0),
            rainfall: Some(90.0),
            rel_humidity: Some(75.0),
            population: 50_000,
            cases: (2.0 * AMPLITUDE + AMPLITUDE * (2.0 * PI * t as f64 / 12.0).sin()).round()
                as u64,
        })
        .collect()
}

fn sinusoid_partitions() -> (Partition, Partition) {
    let w = make_windows(&sinusoid(200), WindowSpec::new(12, Variant::Univariate)).unwrap();
    split_train_test(&w, 0.8).unwrap()
}

#[test]
fn sinusoid_is_learned() {
    let (tr, _) = sinusoid_partitions();
    let cfg = TrainConfig {
        hidden: 16,
        epochs: 500,
        ..Default::default()
    };
    let m = train(&tr, &cfg).unwrap();
    assert_eq!(m.loss_history.len(), 500);
    assert!(m.loss_history.iter().all(|l| l.is_finite()));
    assert!(m.loss_history.last() < m.loss_history.first());

    let scaled_rmse = m.loss_history.last().unwrap().sqrt();
    assert!(
        scaled_rmse < 0.05,
        "train RMSE {scaled_rmse} in scaled units"
    );

    let fit = m.predict(&tr.inputs).unwrap();
    let err = rmse(&tr.raw_targets, &fit).unwrap();
    assert!(err < 0.05 * AMPLITUDE, "train RMSE {err} cases");
    assert_eq!(m.predict(&tr.inputs).unwrap(), fit);
}

#[test]
fn zero_epochs_returns_the_initialized_model() {
    let (tr, _) = sinusoid_partitions();
    let cfg = TrainConfig {
        hidden: 5,
        epochs: 0,
        seed: 4,
        ..Default::default()
    };
    let m = train(&tr, &cfg).unwrap();
    assert!(m.loss_history.is_empty());
    assert_eq!(m.params, LstmParams::init(1, 5, &mut Rng::new(4)).unwrap());
}

#[test]
fn training_is_bit_reproducible_and_survives_serialization() {
    let (tr, te) = sinusoid_partitions();
    for batch_size in [None, Some(16)] {
        let cfg = TrainConfig {
            hidden: 6,
            epochs: 25,
            batch_size,
            seed: 9,
            ..Default::default()
        };
        let a = train(&tr, &cfg).unwrap();
        let b = train(&tr, &cfg).unwrap();
        assert_eq!(a, b);
        let back = read_model(&write_model(&a)).unwrap();
        assert_eq!(back, a);
        assert_eq!(
            back.predict_raw(&te.raw_inputs).unwrap(),
            a.predict_raw(&te.raw_inputs).unwrap()
        );
    }
}

#[test]
fn variants_differ_only_in_width() {
    let mut c = SynthConfig::burundi(3);
    c.provinces.truncate(1);
    c.months = 40;
    c.missingness = 0.0;
    let (d, _) = generate(&c).unwrap();
    let s = d.series(&c.provinces[0].name).unwrap();
    for v in Variant::ALL {
        let w = make_windows(s, WindowSpec::new(12, v)).unwrap();
        let (tr, _) = split_train_test(&w, 0.8).unwrap();
        let m = train(
            &tr,
            &TrainConfig {
                hidden: 3,
                epochs: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.params.features(), v.width());
        let names: Vec<String> = LstmParams::tensor_names();
        let shapes = m.params.tensor_shapes();
        assert_eq!(names.len(), shapes.len());
        for (n, (r, c)) in names.iter().zip(shapes) {
            if n.starts_with("w_") {
                assert_eq!((r, c), (3, v.width()));
            }
        }
    }
}

/// Median over 20 seeds of one-step RMSE on noisy seasonal synthetic series.
#[test]
fn univariate_beats_persistence_on_seasonal_data() {
    let mut lstm = Vec::new();
    let mut naive = Vec::new();
    for seed in 0..20u64 {
        let mut c = SynthConfig::burundi(300 + seed);
        c.missingness = 0.0;
        let region = c.provinces[seed as usize % c.provinces.len()].name.clone();
        let (d, _) = generate(&c).unwrap();
        let w = make_windows(
            d.series(&region).unwrap(),
            WindowSpec::new(12, Variant::Univariate),
        )
        .unwrap();
        let (tr, te) = split_train_test(&w, 0.8).unwrap();
        let m = train(
            &tr,
            &TrainConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        lstm.push(rmse(&te.raw_targets, &m.predict_raw(&te.raw_inputs).unwrap()).unwrap());
        let p = persistence_baseline(&te.raw_inputs, Variant::Univariate).unwrap();
        naive.push(rmse(&te.raw_targets, &p).unwrap());
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[9] + v[10]) / 2.0
    };
    let (a, b) = (median(&mut lstm), median(&mut naive));
    assert!(a < b, "median LSTM RMSE {a} vs persistence {b}");
}
