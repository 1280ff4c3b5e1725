use std::collections::HashSet;

use proptest::prelude::*;
use zeroshot_ecg::adaptation::build_abs_library;
use zeroshot_ecg::classifiers::{ensemble_classify, CnnModel, EnsembleModel, NpeChannel, ResidualDistributions};
use zeroshot_ecg::ingest::{synth_corpus, BeatLabel, PatientBeats, SynthConfig};
use zeroshot_ecg::pipeline::{
    build_training_set, calibrate_cascade, calibrate_from_energies, efficiency_sweep, emit_results, evaluate,
    held_out_npe_energies, macro_average, read_metrics_csv, run_cascade, run_corpus, split_train_val, ExperimentConfig,
    Metrics, Route, StrategyConfig, StrategyKind, StrategyState, TargetModel, MACRO_ROW,
};
use zeroshot_ecg::sparse::{npe_flops, residual_npe};

fn corpus(seed: u64, patients: usize, beats: usize) -> Vec<PatientBeats> {
    let cfg = SynthConfig { seed, n_patients: patients, beats_per_patient: beats, ..Default::default() };
    synth_corpus(&cfg).unwrap().iter().map(PatientBeats::from_record).collect()
}

fn label(abnormal: bool) -> BeatLabel {
    BeatLabel::from_abnormal(abnormal)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_agree_with_their_confusion_matrix(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let pred: Vec<BeatLabel> = pairs.iter().map(|p| label(p.0)).collect();
        let truth: Vec<BeatLabel> = pairs.iter().map(|p| label(p.1)).collect();
        let m = evaluate(&pred, &truth);
        let count = |p: bool, t: bool| pairs.iter().filter(|x| x.0 == p && x.1 == t).count() as u64;
        let (tp, fp, tn, fn_) = (count(true, true), count(true, false), count(false, false), count(false, true));
        prop_assert_eq!((m.tp, m.fp, m.tn, m.fn_), (tp, fp, tn, fn_));
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (p, r) = (ratio(tp, tp + fp), ratio(tp, tp + fn_));
        prop_assert_eq!(m.accuracy, ratio(tp + tn, pairs.len() as u64));
        prop_assert_eq!(m.specificity, ratio(tn, tn + fp));
        prop_assert_eq!(m.precision, p);
        prop_assert_eq!(m.recall, r);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        prop_assert!((m.f1 - f1).abs() < 1e-15);
    }

    #[test]
    fn macro_of_copies_is_the_item(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500, n in 1usize..6) {
        let m = Metrics::from_counts(tp, fp, tn, fn_);
        let avg = macro_average(&vec![m; n]);
        for (a, b) in [(avg.accuracy, m.accuracy), (avg.precision, m.precision), (avg.recall, m.recall), (avg.f1, m.f1), (avg.specificity, m.specificity)] {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn train_val_split_is_stratified(normals in 0usize..200, abnormals in 0usize..200, seed in 0u64..100) {
        let beats = &corpus(9, 1, 120)[0].pairs;
        let (n_pool, a_pool): (Vec<_>, Vec<_>) = beats.iter().cloned().partition(|p| !p.is_abnormal());
        let pairs: Vec<_> = n_pool.iter().cycle().take(normals).chain(a_pool.iter().cycle().take(abnormals)).cloned().collect();
        let (train, val) = split_train_val(&pairs, 0.8, seed).unwrap();
        prop_assert_eq!(train.len() + val.len(), pairs.len());
        let tr_ab = train.iter().filter(|p| p.is_abnormal()).count();
        prop_assert_eq!(tr_ab, (0.8 * abnormals as f64).round() as usize);
        prop_assert_eq!(train.len() - tr_ab, (0.8 * normals as f64).round() as usize);
        let again = split_train_val(&pairs, 0.8, seed).unwrap();
        prop_assert_eq!(again.0, train);
    }
}

#[test]
fn patient_232_domain_adaptation_metrics() {
    let m = Metrics::from_counts(9054, 218, 2932, 4756);
    assert!((m.precision - 0.97649).abs() < 1e-4);
    assert!((m.recall - 0.65561).abs() < 1e-4);
    assert!((m.f1 - 0.78451).abs() < 1e-4);
}

#[test]
fn training_sets_follow_their_composition_rules() {
    let c = corpus(2, 3, 300);
    let split = c[0].split(1.0).unwrap();
    let others: Vec<&PatientBeats> = c[1..].iter().collect();
    let other_abnormal: usize = others.iter().map(|p| p.pairs.iter().filter(|b| b.is_abnormal()).count()).sum();

    let cfg = StrategyConfig { kind: StrategyKind::Baseline, ..Default::default() };
    let model = TargetModel::learn(&split, &cfg).unwrap();
    let base = build_training_set(&split, &others, &StrategyState::Baseline, 0).unwrap();
    let (n, a) = base.counts();
    assert_eq!(a, other_abnormal);
    assert_eq!(n, a);

    let cfg = StrategyConfig { kind: StrategyKind::DomainAdaptation, ..Default::default() };
    let da = build_training_set(&split, &others, &StrategyState::prepare(&model, &others, &cfg).unwrap(), 0).unwrap();
    assert_eq!(da.counts(), base.counts());
    for p in &da.pairs {
        for b in [&p.single, &p.trio] {
            let norm: f64 = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }
    let changed = da.pairs.iter().zip(&base.pairs).filter(|(x, y)| x != y).count();
    assert!(changed > 0);

    let lib = build_abs_library(&others, &cfg.abs).unwrap();
    let abs = build_training_set(&split, &others, &StrategyState::Abs(lib.clone()), 0).unwrap();
    assert_eq!(abs.counts(), (split.train_normals.len(), lib.filters.len()));
    assert!(abs.pairs[split.train_normals.len()..].iter().all(|p| p.is_abnormal()));
}

fn cascade_fixture() -> (EnsembleModel, Vec<f64>, zeroshot_ecg::ingest::PatientSplit) {
    let c = corpus(4, 1, 600);
    let split = c[0].split(5.0).unwrap();
    let model = TargetModel::learn(&split, &StrategyConfig::default()).unwrap();
    let f = model.residual.annihilator.clone();
    let energy = |p: &zeroshot_ecg::ingest::BeatPair| residual_npe(&f, &p.single.values).unwrap().energy;
    let normal: Vec<f64> = split.train_normals.iter().map(energy).collect();
    let abnormal: Vec<f64> = split.test_beats.iter().filter(|p| p.is_abnormal()).map(energy).collect();
    let dist = ResidualDistributions::fit(&normal, &abnormal).unwrap();
    let ens = EnsembleModel { cnn: CnnModel::new(0), dist, annihilator: f, confidence_threshold: 0.7, npe_channel: NpeChannel::Single };
    let calibration = held_out_npe_energies(&split.train_normals, &StrategyConfig::default().dictionary, 5).unwrap();
    (ens, calibration, split)
}

#[test]
fn cascade_routing_and_accounting() {
    let (ens, calibration, split) = cascade_fixture();
    let test = &split.test_beats;

    let off = calibrate_from_energies(&calibration, 0.0, false).unwrap();
    let out = run_cascade(&off, &ens, test).unwrap();
    assert_eq!(out.efficiency.npe_only, 0);
    for (p, got) in test.iter().zip(&out.predictions) {
        assert_eq!(*got, ensemble_classify(&ens, p).unwrap().label);
    }
    let plain: Vec<BeatLabel> = test.iter().map(|p| ensemble_classify(&ens, p).unwrap().label).collect();
    let truth: Vec<BeatLabel> = test.iter().map(|p| p.single.binary()).collect();
    assert_eq!(out.metrics, evaluate(&plain, &truth));

    let all = run_cascade(&calibrate_from_energies(&calibration, 1.0, false).unwrap(), &ens, test).unwrap();
    assert!(all.routes.iter().all(|r| *r == Route::NpeNormal));

    let half = run_cascade(&calibrate_from_energies(&calibration, 0.5, true).unwrap(), &ens, test).unwrap();
    let e = &half.efficiency;
    assert_eq!(e.npe_only + e.forwarded, test.len());
    assert_eq!(half.routes.iter().filter(|r| r.npe_only()).count(), e.npe_only);
    assert_eq!(e.flops_saved, e.npe_only as u64 * (ens.cnn.forward_flops() - npe_flops(128, 20)));

    let sweep = efficiency_sweep(&ens, &calibration, test, &[0.0, 0.2, 0.4, 0.6, 0.8], false).unwrap();
    assert!(sweep.windows(2).all(|w| w[1].realized_fraction >= w[0].realized_fraction));
}

#[test]
fn calibrated_fraction_holds_on_new_normals() {
    let (ens, calibration, split) = cascade_fixture();
    let held_out: Vec<_> = split.test_beats.iter().filter(|p| !p.is_abnormal()).cloned().collect();
    let cfg = calibrate_from_energies(&calibration, 0.4, false).unwrap();
    let out = run_cascade(&cfg, &ens, &held_out).unwrap();
    let realized = out.efficiency.npe_fraction;
    assert!((realized - 0.4).abs() <= 0.05, "realized {realized}");

    // The in-sample quantile is biased low on unseen beats.
    let naive = calibrate_cascade(&ens.annihilator, &split.train_normals, 0.4, false).unwrap();
    assert!(naive.npe_low_threshold < cfg.npe_low_threshold);
}

#[test]
fn emitted_results_round_trip_and_are_deterministic() {
    let c = corpus(6, 3, 250);
    let targets: Vec<String> = c.iter().take(2).map(|p| p.patient_id.clone()).collect();
    let mut cfg = ExperimentConfig { train_minutes: 1.0, seeds: vec![3, 4], ..Default::default() };
    cfg.strategy.kind = StrategyKind::Baseline;
    cfg.train.max_epochs = 3;
    cfg.train.batch_size = 64;
    cfg.cascade_fractions = vec![0.0, 0.5];
    let result = run_corpus(&c, &targets, &cfg).unwrap();
    assert_eq!(result.patients.len(), 2);

    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_results(&result, &cfg, a.path()).unwrap();
    emit_results(&run_corpus(&c, &targets, &cfg).unwrap(), &cfg, b.path()).unwrap();
    for name in ["metrics.csv", "confusion.csv", "runs.csv", "config.json", "f1_vs_threshold.csv", "f1_vs_confidence.csv", "efficiency.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name} differs between identical runs");
    }

    let rows = read_metrics_csv(&a.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), (targets.len() + 1) * 4);
    for row in &rows {
        let want = if row.patient == MACRO_ROW {
            *result.macro_metrics.get(&row.method).unwrap()
        } else {
            let p = result.patients.iter().find(|p| p.patient_id == row.patient).unwrap();
            *p.mean.get(&row.method).unwrap()
        };
        assert_eq!(row.metrics(), want);
    }

    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("config.json")).unwrap()).unwrap();
    let seeds: HashSet<u64> = json["seeds"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(seeds, HashSet::from([3, 4]));
}
