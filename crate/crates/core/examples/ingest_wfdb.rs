//! Write a synthetic record in WFDB format 212 with a MIT annotation file,
//! read it back through the directory loader, and print what ingestion made
//! of every annotated peak.
//!
//! Pass a directory holding real `.hea`/`.dat`/`.atr` triples to load those
//! instead.

use std::collections::BTreeMap;
use std::path::PathBuf;

use zeroshot_ecg::ingest::{load_directory, synth_corpus, write_wfdb, LoadOptions, SynthConfig};

fn main() -> anyhow::Result<()> {
    let scratch = tempfile_dir()?;
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let synth = SynthConfig { seed: 7, n_patients: 2, beats_per_patient: 300, ..Default::default() };
            for rec in synth_corpus(&synth)? {
                let hea = write_wfdb(&rec, &scratch, 200.0)?;
                println!("wrote {}", hea.display());
            }
            scratch.clone()
        }
    };

    for p in load_directory(&dir, &LoadOptions::default())? {
        let r = &p.report;
        println!(
            "{}: {} peaks, {} beat pairs, skipped {} at the edges, {} unmapped, {} invalid",
            p.patient_id, r.peaks, r.extracted, r.skipped_boundary, r.skipped_unmapped, r.skipped_invalid
        );
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for pair in &p.pairs {
            *counts.entry(format!("{:?}", pair.label())).or_default() += 1;
        }
        let summary: Vec<String> = counts.iter().map(|(c, n)| format!("{c} {n}")).collect();
        println!("  classes: {}", summary.join(", "));
        let split = p.split(1.0)?;
        println!("  first minute: {} training normals, {} test beats", split.train_normals.len(), split.test_beats.len());
    }
    std::fs::remove_dir_all(&scratch)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("ecg-wfdb-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
