//! Combine a trained CNN with the NPE likelihood classifier. Beats the CNN
//! is unsure about go to the likelihood test; the threshold is picked on
//! validation data and the test F1 is shown across the whole grid.

use zeroshot_ecg::classifiers::{
    cnn_train, confidence_sweep, select_confidence_from, BranchOutputs, EnsembleModel, NpeChannel,
    ResidualDistributions, Sample, TrainConfig,
};
use zeroshot_ecg::ingest::{synth_corpus, BeatLabel, BeatPair, PatientBeats, SynthConfig};
use zeroshot_ecg::pipeline::{build_training_set, split_train_val, StrategyConfig, StrategyState, TargetModel};
use zeroshot_ecg::sparse::residual_npe;

fn main() -> anyhow::Result<()> {
    let synth = SynthConfig { seed: 1, n_patients: 4, beats_per_patient: 400, ..Default::default() };
    let corpus: Vec<PatientBeats> = synth_corpus(&synth)?.iter().map(PatientBeats::from_record).collect();
    let (target, others) = corpus.split_first().unwrap();
    let others: Vec<&PatientBeats> = others.iter().collect();

    let split = target.split(1.0)?;
    let cfg = StrategyConfig::default();
    let model = TargetModel::learn(&split, &cfg)?;
    let set = build_training_set(&split, &others, &StrategyState::prepare(&model, &others, &cfg)?, 0)?;
    let (train, val) = split_train_val(&set.pairs, 0.8, 0)?;
    let samples = |ps: &[BeatPair]| ps.iter().map(Sample::from_pair).collect::<Vec<_>>();
    let tc = TrainConfig { max_epochs: 30, batch_size: 64, ..Default::default() };
    let (cnn, _) = cnn_train(&samples(&train), &samples(&val), &tc)?;

    let f = model.residual.annihilator.clone();
    let (mut normal, mut abnormal) = (Vec::new(), Vec::new());
    for p in &train {
        let e = residual_npe(&f, &p.single.values)?.energy;
        if p.is_abnormal() { abnormal.push(e) } else { normal.push(e) }
    }
    let dist = ResidualDistributions::fit(&normal, &abnormal)?;
    println!("normal NPE ~ Exp(β = {:.4}), abnormal NPE ~ N({:.4}, {:.4}²)", dist.beta, dist.mu, dist.sigma);

    let ens = EnsembleModel { cnn, dist, annihilator: f, confidence_threshold: 0.5, npe_channel: NpeChannel::Single };
    let outputs = |ps: &[BeatPair]| ps.iter().map(|p| BranchOutputs::compute(&ens, p)).collect::<Result<Vec<_>, _>>();
    let truth = |ps: &[BeatPair]| ps.iter().map(|p| p.single.binary()).collect::<Vec<BeatLabel>>();
    let val_out = outputs(&val)?;
    let chosen_c = select_confidence_from(&val_out, &truth(&val));
    println!("confidence threshold chosen on validation: {chosen_c:.2}");

    let test_out = outputs(&split.test_beats)?;
    let sweep = confidence_sweep(&test_out, &truth(&split.test_beats));
    let cnn_only = &sweep[0].1;
    println!("C      F1      sent to the likelihood test");
    for (c, m) in sweep.iter().step_by(7) {
        let deferred = test_out.iter().filter(|o| o.confidence < *c).count();
        println!("{c:.2}  {:.4}  {deferred}/{}", m.f1, test_out.len());
    }
    let chosen = sweep.iter().find(|(c, _)| (*c - chosen_c).abs() < 1e-9).unwrap();
    println!("CNN alone {:.4}; ensemble at the chosen threshold {:.4}", cnn_only.f1, chosen.1.f1);
    Ok(())
}
