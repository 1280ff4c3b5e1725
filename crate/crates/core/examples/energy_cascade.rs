//! The low-power monitoring cascade: every beat gets the cheap null-space
//! projection, and only beats whose energy is not clearly normal reach the
//! ensemble. The low threshold is a quantile of training-normal energies
//! measured on dictionaries that did not see those beats.

use zeroshot_ecg::ingest::{synth_corpus, PatientBeats, SynthConfig};
use zeroshot_ecg::pipeline::{
    calibrate_from_energies, held_out_npe_energies, ExperimentConfig, PreparedTarget, StrategyConfig,
};
use zeroshot_ecg::sparse::residual_npe;

fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

fn main() -> anyhow::Result<()> {
    let minutes: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3.0);
    let synth = SynthConfig { seed: 2, n_patients: 3, beats_per_patient: 700, ..Default::default() };
    let corpus: Vec<PatientBeats> = synth_corpus(&synth)?.iter().map(PatientBeats::from_record).collect();
    let others: Vec<&PatientBeats> = corpus[1..].iter().collect();

    let mut cfg = ExperimentConfig { train_minutes: minutes, ..Default::default() };
    cfg.train.max_epochs = 30;
    cfg.train.batch_size = 64;
    let prepared = PreparedTarget::new(&corpus[0], others, &cfg)?;
    let split = &prepared.split;
    let f = &prepared.model.residual.annihilator;
    let npe = |p: &zeroshot_ecg::ingest::BeatPair| residual_npe(f, &p.single.values).map(|r| r.energy);

    let in_sample = split.train_normals.iter().map(npe).collect::<Result<Vec<_>, _>>()?;
    let held_out = held_out_npe_energies(&split.train_normals, &StrategyConfig::default().dictionary, 5)?;
    let test_normals = split
        .test_beats
        .iter()
        .filter(|p| !p.is_abnormal())
        .map(npe)
        .collect::<Result<Vec<_>, _>>()?;
    println!("{} training normals from the first {minutes} min", split.train_normals.len());
    println!("NPE quantile     0.2      0.4      0.6");
    for (name, xs) in [("in-sample", &in_sample), ("held-out", &held_out), ("test", &test_normals)] {
        println!("{name:<13} {:.5}  {:.5}  {:.5}", quantile(xs, 0.2), quantile(xs, 0.4), quantile(xs, 0.6));
    }

    // One trained ensemble, reused at every fraction.
    let ens = prepared.run(0, &cfg)?;
    println!("ensemble test F1 {:.4}", ens.metrics.ensemble.f1);
    println!("target  realized  F1      FLOPs saved");
    for p in &ens.efficiency {
        println!("{:.1}     {:.3}     {:.4}  {}", p.target_fraction, p.realized_fraction, p.f1, p.flops_saved);
    }

    // The two-sided variant also sends very high energies straight to abnormal.
    let cascade = calibrate_from_energies(&held_out, 0.4, true)?;
    println!(
        "two-sided at 0.4: normal below {:.5}, abnormal at or above {:.5}",
        cascade.npe_low_threshold,
        cascade.npe_high_threshold.unwrap_or(f64::INFINITY)
    );
    Ok(())
}
