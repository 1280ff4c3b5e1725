//! Learn a morphology transform from one synthetic patient to another and
//! show how it pulls the source's normal beats towards the target's
//! dictionary.

use zeroshot_ecg::adaptation::{apply_mtm, learn_mtm, MtmConfig};
use zeroshot_ecg::ingest::{synth_corpus, PatientBeats, SynthConfig};
use zeroshot_ecg::pipeline::{beats_matrix, StrategyConfig, TargetModel};
use zeroshot_ecg::sparse::ResidualKind;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let synth = SynthConfig { seed, n_patients: 2, beats_per_patient: 500, ..Default::default() };
    let corpus: Vec<PatientBeats> = synth_corpus(&synth)?.iter().map(PatientBeats::from_record).collect();
    let (target, source) = (&corpus[0], &corpus[1]);

    let split = target.split(1.0)?;
    let model = TargetModel::learn(&split, &StrategyConfig::default())?;
    let normals: Vec<_> = source.pairs.iter().filter(|p| !p.is_abnormal()).take(300).map(|p| &p.single).collect();
    let s = beats_matrix(normals.iter().copied())?;
    let q = learn_mtm(model.single_dictionary(), &s, &source.patient_id, &MtmConfig::default())?;
    let adapted = apply_mtm(&q, &s);

    let sae = |m: &nalgebra::DMatrix<f64>| -> anyhow::Result<Vec<f64>> {
        m.column_iter()
            .map(|c| Ok(model.residual.energy(ResidualKind::Sae, c.as_slice())?))
            .collect()
    };
    let own: Vec<f64> = split
        .train_normals
        .iter()
        .map(|p| model.residual.energy(ResidualKind::Sae, &p.single.values))
        .collect::<Result<_, _>>()?;
    let (before, after) = (sae(&s)?, sae(&adapted)?);
    println!("SAE energy on {}'s dictionary", target.patient_id);
    println!("  target normals        mean {:.4}  median {:.4}", mean(&own), median(&own));
    println!("  {} normals, raw      mean {:.4}  median {:.4}", source.patient_id, mean(&before), median(&before));
    println!("  {} normals, adapted  mean {:.4}  median {:.4}", source.patient_id, mean(&after), median(&after));
    println!("  ‖Q − I‖_F = {:.4}", (&q.q - nalgebra::DMatrix::<f64>::identity(128, 128)).norm());
    Ok(())
}
