//! Learn one patient's dictionary from the first minutes of normal beats and
//! compare the four residual detectors: how well each separates the
//! patient's later normal and abnormal beats, and what each costs per beat.

use zeroshot_ecg::ingest::{synth_corpus, PatientBeats, SynthConfig};
use zeroshot_ecg::pipeline::{StrategyConfig, TargetModel};
use zeroshot_ecg::sparse::{auc, ResidualKind};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let synth = SynthConfig { seed, n_patients: 1, beats_per_patient: 800, ..Default::default() };
    let patient = PatientBeats::from_record(&synth_corpus(&synth)?[0]);
    let split = patient.split(2.0)?;
    let model = TargetModel::learn(&split, &StrategyConfig::default())?;
    let d = model.single_dictionary();
    println!(
        "{}: {} training normals, dictionary {}x{}, {} test beats",
        patient.patient_id,
        split.train_normals.len(),
        d.signal_len(),
        d.n_atoms(),
        split.test_beats.len()
    );

    let labels: Vec<bool> = split.test_beats.iter().map(|p| p.is_abnormal()).collect();
    println!("{:<6} {:>8} {:>10} {:>10} {:>8}", "method", "AUC", "normal", "abnormal", "FLOPs");
    for kind in ResidualKind::ALL {
        let energies = split
            .test_beats
            .iter()
            .map(|p| model.residual.energy(kind, &p.single.values))
            .collect::<Result<Vec<f64>, _>>()?;
        let mean = |abnormal: bool| {
            let xs: Vec<f64> = energies.iter().zip(&labels).filter(|(_, &l)| l == abnormal).map(|(e, _)| *e).collect();
            xs.iter().sum::<f64>() / xs.len().max(1) as f64
        };
        println!(
            "{:<6} {:>8.4} {:>10.4} {:>10.4} {:>8}",
            kind.name(),
            auc(&energies, &labels)?,
            mean(false),
            mean(true),
            model.residual.flops(kind)
        );
    }
    Ok(())
}
