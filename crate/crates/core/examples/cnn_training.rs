//! Train the two-channel 1-D CNN on a domain-adapted training set and print
//! the loss curve, the early-stopping point and test metrics.

use zeroshot_ecg::classifiers::{cnn_train, CnnModel, Sample, TrainConfig};
use zeroshot_ecg::ingest::{synth_corpus, BeatLabel, PatientBeats, SynthConfig};
use zeroshot_ecg::pipeline::{
    build_training_set, evaluate, split_train_val, StrategyConfig, StrategyState, TargetModel,
};

fn main() -> anyhow::Result<()> {
    let synth = SynthConfig { seed: 0, n_patients: 4, beats_per_patient: 400, ..Default::default() };
    let corpus: Vec<PatientBeats> = synth_corpus(&synth)?.iter().map(PatientBeats::from_record).collect();
    let (target, others) = corpus.split_first().unwrap();
    let others: Vec<&PatientBeats> = others.iter().collect();

    let split = target.split(1.0)?;
    let cfg = StrategyConfig::default();
    let model = TargetModel::learn(&split, &cfg)?;
    let state = StrategyState::prepare(&model, &others, &cfg)?;
    let set = build_training_set(&split, &others, &state, 0)?;
    let (normal, abnormal) = set.counts();
    println!("training set for {}: {normal} normal, {abnormal} abnormal", target.patient_id);

    println!("layer shapes for a 128-sample beat: {:?}", CnnModel::shape_chain(128));
    let (train, val) = split_train_val(&set.pairs, 0.8, 0)?;
    let train: Vec<Sample> = train.iter().map(Sample::from_pair).collect();
    let val: Vec<Sample> = val.iter().map(Sample::from_pair).collect();
    let tc = TrainConfig { max_epochs: 40, batch_size: 64, ..Default::default() };
    let (cnn, history) = cnn_train(&train, &val, &tc)?;
    println!("{} parameters, {} FLOPs per forward pass", cnn.n_params(), cnn.forward_flops());
    for (epoch, (t, v)) in history.train_loss.iter().zip(&history.val_loss).enumerate().step_by(5) {
        println!("epoch {epoch:>3}: train {t:.4}  val {v:.4}");
    }
    println!("best epoch {} with validation loss {:.4}", history.best_epoch, history.best_val_loss);

    let pred = split
        .test_beats
        .iter()
        .map(|p| Ok(cnn.forward_pair(p)?.label()))
        .collect::<anyhow::Result<Vec<BeatLabel>>>()?;
    let truth: Vec<BeatLabel> = split.test_beats.iter().map(|p| p.single.binary()).collect();
    let m = evaluate(&pred, &truth);
    println!(
        "test: accuracy {:.4}, precision {:.4}, recall {:.4}, F1 {:.4}",
        m.accuracy, m.precision, m.recall, m.f1
    );
    Ok(())
}
