//! Baseline vs domain adaptation on a synthetic corpus, printing macro
//! metrics for every classifier.

use std::time::Instant;

use zeroshot_ecg::ingest::{synth_corpus, PatientBeats, SynthConfig};
use zeroshot_ecg::pipeline::{run_corpus, ExperimentConfig, StrategyKind};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default)
}

/// Usage: `full_experiment [corpus-seed] [max-epochs] [runs]`
fn main() -> anyhow::Result<()> {
    let (corpus_seed, epochs, runs) = (arg(1, 0), arg(2, 30) as usize, arg(3, 1));
    let synth = SynthConfig { seed: corpus_seed, n_patients: 5, beats_per_patient: 400, ..Default::default() };
    let corpus: Vec<PatientBeats> = synth_corpus(&synth)?.iter().map(PatientBeats::from_record).collect();
    let targets: Vec<String> = corpus.iter().map(|p| p.patient_id.clone()).collect();

    for kind in [StrategyKind::Baseline, StrategyKind::DomainAdaptation, StrategyKind::Abs] {
        let mut cfg = ExperimentConfig { train_minutes: 1.0, seeds: (0..runs).collect(), ..Default::default() };
        cfg.strategy.kind = kind;
        cfg.train.max_epochs = epochs;
        cfg.train.batch_size = 64;
        let t = Instant::now();
        let res = run_corpus(&corpus, &targets, &cfg)?;
        println!("{kind} ({:.1}s, {} skipped)", t.elapsed().as_secs_f64(), res.skipped.len());
        for (method, m) in res.macro_metrics.iter() {
            println!("  {method:<14} f1 {:.3}  acc {:.3}  recall {:.3}", m.f1, m.accuracy, m.recall);
        }
        for p in &res.patients {
            let r = &p.runs[0];
            println!(
                "    {}  cnn f1 {:.3}  ({} test beats, {} abnormal; trained {} epochs, best {})",
                p.patient_id, p.mean.cnn.f1, p.test_beats, p.test_abnormal, r.epochs_run, r.best_epoch
            );
        }
    }
    Ok(())
}
