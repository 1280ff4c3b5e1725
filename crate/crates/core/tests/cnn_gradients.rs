mod common;

use common::gradient_errors;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zeroshot_ecg::classifiers::{cnn_train, CnnModel, Sample, TrainConfig};
use zeroshot_ecg::ingest::{BeatLabel, BEAT_LEN};

#[test]
fn backprop_matches_finite_differences() {
    for seed in 0..3 {
        let model = CnnModel::new(seed);
        for (name, err) in gradient_errors(&model, seed) {
            assert!(err < 1e-3, "seed {seed} tensor {name}: relative error {err}");
        }
    }
}

fn blob(rng: &mut ChaCha8Rng, abnormal: bool) -> Sample {
    let centre = if abnormal { 0.7 } else { 0.3 };
    let mut input: Vec<f64> = (0..2 * BEAT_LEN)
        .map(|i| {
            let t = (i % BEAT_LEN) as f64 / BEAT_LEN as f64;
            (-((t - centre) / 0.05).powi(2)).exp() + rng.random_range(-0.1..0.1)
        })
        .collect();
    let n = input.iter().map(|v| v * v).sum::<f64>().sqrt();
    input.iter_mut().for_each(|v| *v /= n);
    Sample { input, label: BeatLabel::from_abnormal(abnormal) }
}

#[test]
fn separable_blobs_are_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let train: Vec<Sample> = (0..200).map(|i| blob(&mut rng, i % 2 == 0)).collect();
    let val: Vec<Sample> = (0..60).map(|i| blob(&mut rng, i % 2 == 0)).collect();
    let cfg = TrainConfig { max_epochs: 50, batch_size: 32, ..Default::default() };
    let (model, hist) = cnn_train(&train, &val, &cfg).unwrap();
    let correct = val.iter().filter(|s| model.forward(&s.input).unwrap().label() == s.label).count();
    let acc = correct as f64 / val.len() as f64;
    assert!(acc >= 0.95, "validation accuracy {acc}");
    assert!(hist.val_loss.iter().all(|&l| hist.best_val_loss <= l));
}

#[test]
fn single_class_training_set_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train: Vec<Sample> = (0..10).map(|_| blob(&mut rng, false)).collect();
    let val = train.clone();
    assert!(cnn_train(&train, &val, &TrainConfig::default()).is_err());
}
