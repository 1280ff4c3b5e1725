//! Fit degradation filters that turn other patients' average normal beat
//! into each of their abnormal beats, then apply the library to a new
//! patient's average normal to synthesize abnormal training beats.

use zeroshot_ecg::adaptation::{average_normal_pair, build_abs_library, conv_same, synthesize_pair, AbsConfig};
use zeroshot_ecg::ingest::{synth_corpus, PatientBeats, SynthConfig};

fn main() -> anyhow::Result<()> {
    let synth = SynthConfig { seed: 3, n_patients: 4, beats_per_patient: 400, ..Default::default() };
    let corpus: Vec<PatientBeats> = synth_corpus(&synth)?.iter().map(PatientBeats::from_record).collect();
    let (target, sources) = corpus.split_first().unwrap();
    let sources: Vec<&PatientBeats> = sources.iter().collect();

    for prune in [1.0, 0.9, 0.7] {
        let lib = build_abs_library(&sources, &AbsConfig { prune_threshold: prune, ..Default::default() })?;
        println!("prune threshold {prune}: {} filters", lib.len());
    }
    let lib = build_abs_library(&sources, &AbsConfig::default())?;

    // How well does each filter reproduce the beat it was fitted to?
    let mut fit_err = Vec::new();
    for f in &lib.filters {
        let src = sources.iter().find(|p| p.patient_id == f.source_id).unwrap();
        let normals: Vec<_> = src.pairs.iter().filter(|p| !p.is_abnormal()).cloned().collect();
        let avg = average_normal_pair(&normals).unwrap();
        let abnormal = src.pairs.iter().find(|p| p.origin_index() == f.source_abnormal_index).unwrap();
        let y = conv_same(&avg.single.values, &f.h);
        let err: f64 = y.iter().zip(&abnormal.single.values).map(|(a, b)| (a - b).powi(2)).sum();
        fit_err.push(err);
    }
    fit_err.sort_by(f64::total_cmp);
    println!(
        "filter fit error (squared, unit-energy beats): median {:.4}, worst {:.4}",
        fit_err[fit_err.len() / 2],
        fit_err.last().unwrap()
    );

    let split = target.split(1.0)?;
    let avg = average_normal_pair(&split.train_normals).unwrap();
    let synthetic = lib.filters.iter().map(|f| synthesize_pair(avg, f)).collect::<Result<Vec<_>, _>>()?;
    let mut by_label = std::collections::BTreeMap::<String, usize>::new();
    for (f, p) in lib.filters.iter().zip(&synthetic) {
        assert!(p.is_abnormal());
        *by_label.entry(format!("{:?}", f.source_label)).or_default() += 1;
    }
    println!("synthesized {} abnormal pairs for {}: {by_label:?}", synthetic.len(), target.patient_id);
    let mut min_dist = f64::INFINITY;
    for p in &synthetic {
        let d: f64 = p.single.values.iter().zip(&avg.single.values).map(|(a, b)| (a - b).powi(2)).sum();
        min_dist = min_dist.min(d);
    }
    println!("closest synthesized beat to the average normal: squared distance {min_dist:.4}");
    Ok(())
}
