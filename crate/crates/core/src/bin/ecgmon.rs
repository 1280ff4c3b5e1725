//! Command-line front end: ingest records, learn the per-patient models
//! and run experiments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use zeroshot_ecg::adaptation::{build_abs_library, learn_mtm, AbsConfig, MtmConfig};
use zeroshot_ecg::classifiers::{cnn_train, NpeChannel, Sample, TrainConfig};
use zeroshot_ecg::ingest::{
    load_directory, synth_corpus, usable_patients, BeatStore, LoadOptions, PatientBeats, RecordFormat, SynthConfig,
    DEFAULT_TRAIN_MINUTES, MITBIH_RECORDS,
};
use zeroshot_ecg::io::{load, save};
use zeroshot_ecg::pipeline::{
    beats_matrix, build_training_set, emit_results, load_config, residual_auc, run_corpus, split_train_val,
    ExperimentConfig, StrategyConfig, StrategyKind, StrategyState, TargetModel, TrainingSet,
};
use zeroshot_ecg::sparse::{build_annihilator, learn_dictionary, Dictionary, DictionaryConfig, ResidualKind};

#[derive(Parser)]
#[command(name = "ecgmon", version, about = "Personalized zero-shot ECG arrhythmia detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract beats from a directory of records (or a synthetic corpus).
    Ingest(IngestArgs),
    #[command(subcommand)]
    Sparse(SparseCommand),
    #[command(subcommand)]
    Adapt(AdaptCommand),
    /// Build one target's labelled training set for a strategy.
    BuildDataset(BuildDatasetArgs),
    /// Train the CNN on a dataset written by `build-dataset`.
    TrainCnn(TrainCnnArgs),
    /// Full per-patient evaluation; writes every result file.
    Run(RunArgs),
    /// Evaluate the energy cascade at one NPE-only fraction.
    Cascade(CascadeArgs),
    /// Ensemble F1 over the confidence-threshold grid.
    SweepConfidence(RunArgs),
    /// Residual-threshold detector F1 over the threshold grid.
    SweepThreshold(SweepThresholdArgs),
    /// Pooled AUC of the SAE, NPE and LAE energies.
    ResidualAuc(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, required_unless_present = "synthetic")]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "wfdb")]
    format: RecordFormat,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Sampling rate assumed for CSV records.
    #[arg(long, default_value_t = 360.0)]
    csv_rate: f64,
    /// Generate this many synthetic patients instead of reading records.
    #[arg(long, conflicts_with = "data_dir")]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
    #[arg(long, default_value_t = 600)]
    beats_per_patient: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SparseCommand {
    /// Learn a patient's dictionary from the normals of its training window.
    LearnDict {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to the first patient in the file.
        #[arg(long)]
        patient: Option<String>,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        #[arg(long, default_value_t = DEFAULT_TRAIN_MINUTES)]
        train_minutes: f64,
        /// Use the beat-trio channel instead of single beats.
        #[arg(long)]
        trio: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the annihilator of a stored dictionary.
    Annihilator {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AdaptCommand {
    /// Learn the transform from a source patient's normals to a dictionary.
    LearnMtm {
        #[arg(long)]
        dict: PathBuf,
        /// Beat store holding the source patient.
        #[arg(long)]
        source: PathBuf,
        /// Defaults to the first patient in the store other than the
        /// dictionary's owner.
        #[arg(long)]
        source_patient: Option<String>,
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
        #[arg(long, default_value_t = 0.002)]
        eta: f64,
        #[arg(long, default_value_t = 25)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        #[arg(long, default_value_t = 300)]
        max_beats: usize,
        #[arg(long)]
        trio: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate and prune the degradation-filter library of a beat store.
    AbsLibrary {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 32)]
        filter_len: usize,
        #[arg(long, default_value_t = 1e-4)]
        ridge: f64,
        #[arg(long, default_value_t = 0.9)]
        prune: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BuildDatasetArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "da")]
    strategy: StrategyKind,
    #[arg(long, default_value_t = DEFAULT_TRAIN_MINUTES)]
    train_minutes: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCnnArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    val_ratio: f64,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by every experiment command. Each one overrides the
/// matching `--config` entry when given.
#[derive(Args)]
struct RunArgs {
    /// Directory of records to read.
    #[arg(long, conflicts_with = "beats")]
    data_dir: Option<PathBuf>,
    /// Beat store written by `ingest`.
    #[arg(long)]
    beats: Option<PathBuf>,
    #[arg(long, default_value = "wfdb")]
    format: RecordFormat,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    #[arg(long, default_value_t = 360.0)]
    csv_rate: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<StrategyKind>,
    /// `all` or a comma-separated list of patient ids.
    #[arg(long, default_value = "all")]
    patients: String,
    /// Use the first `runs` seeds.
    #[arg(long)]
    runs: Option<usize>,
    /// Inclusive range `a..b` or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    train_minutes: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// NPE input of the probabilistic branch: `single` or `trio`.
    #[arg(long)]
    npe_channel: Option<String>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct CascadeArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 0.4)]
    fraction: f64,
    /// Also declare beats above the largest calibration energy abnormal.
    #[arg(long)]
    two_sided: bool,
}

#[derive(Args)]
struct SweepThresholdArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    residual: Option<ResidualKind>,
    #[arg(long)]
    step: Option<f64>,
}

fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if b < a {
            bail!("empty seed range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| Ok(x.trim().parse()?)).collect()
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(k) = self.strategy {
            cfg.strategy.kind = k;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(n) = self.runs {
            if self.seeds.is_none() && self.config.is_none() {
                cfg.seeds = (0..n as u64).collect();
            }
            if cfg.seeds.len() < n {
                bail!("{n} runs requested but only {} seeds given", cfg.seeds.len());
            }
            cfg.seeds.truncate(n);
        }
        if let Some(m) = self.train_minutes {
            cfg.train_minutes = m;
        }
        if let Some(e) = self.max_epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(c) = &self.npe_channel {
            cfg.npe_channel = match c.as_str() {
                "single" => NpeChannel::Single,
                "trio" => NpeChannel::Trio,
                other => bail!("unknown NPE channel {other:?}"),
            };
        }
        Ok(cfg)
    }

    fn corpus(&self) -> anyhow::Result<Vec<PatientBeats>> {
        match (&self.data_dir, &self.beats) {
            (Some(dir), _) => {
                let opts = LoadOptions {
                    format: self.format,
                    channel: self.channel,
                    csv_sampling_rate: self.csv_rate,
                    only: None,
                };
                Ok(load_directory(dir, &opts)?)
            }
            (None, Some(path)) => Ok(load::<BeatStore>(path)?.patients),
            (None, None) => bail!("either --data-dir or --beats is required"),
        }
    }

    /// Targets and the corpus they are evaluated against. With `all` on
    /// MIT-BIH data the excluded records drop out of both.
    fn select(&self, mut corpus: Vec<PatientBeats>) -> anyhow::Result<(Vec<PatientBeats>, Vec<String>)> {
        if self.patients == "all" {
            if corpus.iter().any(|p| MITBIH_RECORDS.contains(&p.patient_id.as_str())) {
                let usable = usable_patients();
                corpus.retain(|p| usable.contains(&p.patient_id.as_str()));
            }
            let ids = corpus.iter().map(|p| p.patient_id.clone()).collect();
            return Ok((corpus, ids));
        }
        let ids: Vec<String> = self.patients.split(',').map(|s| s.trim().to_string()).collect();
        for id in &ids {
            if !corpus.iter().any(|p| &p.patient_id == id) {
                bail!("patient {id} not found");
            }
        }
        Ok((corpus, ids))
    }
}

fn run_experiment(args: &RunArgs, cfg: &ExperimentConfig) -> anyhow::Result<zeroshot_ecg::pipeline::CorpusResult> {
    let (corpus, targets) = args.select(args.corpus()?)?;
    log::info!("{} targets, {} patients in corpus, strategy {}", targets.len(), corpus.len(), cfg.strategy.kind);
    let result = run_corpus(&corpus, &targets, cfg)?;
    emit_results(&result, cfg, &args.out)?;
    for s in &result.skipped {
        eprintln!("skipped {}: {}", s.patient_id, s.reason);
    }
    Ok(result)
}

fn open_store(path: &Path) -> anyhow::Result<BeatStore> {
    load(path).with_context(|| format!("reading beat store {}", path.display()))
}

fn find<'a>(store: &'a BeatStore, id: &str) -> anyhow::Result<&'a PatientBeats> {
    store.patient(id).with_context(|| format!("patient {id} not in beat store"))
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest(a) => {
            let patients = match a.synthetic {
                Some(n) => {
                    let cfg = SynthConfig { seed: a.synth_seed, n_patients: n, beats_per_patient: a.beats_per_patient, ..Default::default() };
                    synth_corpus(&cfg)?.iter().map(PatientBeats::from_record).collect()
                }
                None => {
                    let opts = LoadOptions { format: a.format, channel: a.channel, csv_sampling_rate: a.csv_rate, only: None };
                    load_directory(a.data_dir.as_deref().expect("required by clap"), &opts)?
                }
            };
            for p in &patients {
                let r = &p.report;
                println!(
                    "{}: {} peaks, {} beats, skipped {} boundary / {} unmapped / {} invalid",
                    p.patient_id, r.peaks, r.extracted, r.skipped_boundary, r.skipped_unmapped, r.skipped_invalid
                );
            }
            save(&BeatStore::new(patients), &a.out)?;
        }
        Command::Sparse(SparseCommand::LearnDict { input, patient, n, lambda, iterations, train_minutes, trio, out }) => {
            let store = open_store(&input)?;
            let p = match &patient {
                Some(id) => find(&store, id)?,
                None => store.patients.first().context("empty beat store")?,
            };
            let normals = p.window_normals(train_minutes);
            let s = if trio {
                beats_matrix(normals.iter().map(|b| &b.trio))?
            } else {
                beats_matrix(normals.iter().map(|b| &b.single))?
            };
            let cfg = DictionaryConfig { n_atoms: n, lambda, iterations, ..Default::default() };
            let fit = learn_dictionary(&s, &cfg, &p.patient_id)?;
            println!(
                "{}: {} atoms from {} normals, objective {:.6} after {} iterations",
                p.patient_id,
                n,
                normals.len(),
                fit.objective.last().copied().unwrap_or(f64::NAN),
                fit.objective.len()
            );
            save(&fit.dictionary, &out)?;
        }
        Command::Sparse(SparseCommand::Annihilator { dict, out }) => {
            let d: Dictionary = load(&dict)?;
            save(&build_annihilator(&d)?, &out)?;
        }
        Command::Adapt(AdaptCommand::LearnMtm { dict, source, source_patient, gamma, eta, epochs, lambda, max_beats, trio, out }) => {
            let d: Dictionary = load(&dict)?;
            let store = open_store(&source)?;
            let src = match &source_patient {
                Some(id) => find(&store, id)?,
                None => store
                    .patients
                    .iter()
                    .find(|p| p.patient_id != d.patient_id)
                    .context("no source patient other than the dictionary's owner")?,
            };
            let normals: Vec<_> = src.pairs.iter().filter(|p| !p.is_abnormal()).take(max_beats).collect();
            let s = if trio {
                beats_matrix(normals.iter().map(|b| &b.trio))?
            } else {
                beats_matrix(normals.iter().map(|b| &b.single))?
            };
            let cfg = MtmConfig { gamma, eta, epochs, lambda, ..Default::default() };
            let mut q = learn_mtm(&d, &s, &src.patient_id, &cfg)?;
            q.target_id = d.patient_id.clone();
            save(&q, &out)?;
        }
        Command::Adapt(AdaptCommand::AbsLibrary { input, filter_len, ridge, prune, out }) => {
            let store = open_store(&input)?;
            let refs: Vec<&PatientBeats> = store.patients.iter().collect();
            let lib = build_abs_library(&refs, &AbsConfig { filter_len, ridge, prune_threshold: prune })?;
            println!("{} filters kept", lib.filters.len());
            save(&lib, &out)?;
        }
        Command::BuildDataset(a) => {
            let store = open_store(&a.input)?;
            let target = find(&store, &a.target)?;
            let others: Vec<&PatientBeats> = store.patients.iter().filter(|p| p.patient_id != a.target).collect();
            let split = target.split(a.train_minutes)?;
            let cfg = StrategyConfig { kind: a.strategy, ..Default::default() };
            let model = TargetModel::learn(&split, &cfg)?;
            let state = StrategyState::prepare(&model, &others, &cfg)?;
            let set = build_training_set(&split, &others, &state, a.seed)?;
            let (n, ab) = set.counts();
            println!("{}: {n} normal, {ab} abnormal ({})", a.target, a.strategy);
            save(&set, &a.out)?;
        }
        Command::TrainCnn(a) => {
            let set: TrainingSet = load(&a.dataset)?;
            let (train, val) = split_train_val(&set.pairs, a.val_ratio, a.seed)?;
            let samples = |ps: &[zeroshot_ecg::ingest::BeatPair]| ps.iter().map(Sample::from_pair).collect::<Vec<_>>();
            let mut cfg = TrainConfig { seed: a.seed, ..Default::default() };
            if let Some(e) = a.max_epochs {
                cfg.max_epochs = e;
            }
            if let Some(b) = a.batch_size {
                cfg.batch_size = b;
            }
            let (model, history) = cnn_train(&samples(&train), &samples(&val), &cfg)?;
            println!(
                "best validation loss {:.5} at epoch {} of {}",
                history.best_val_loss,
                history.best_epoch,
                history.val_loss.len()
            );
            save(&model, &a.out)?;
        }
        Command::Run(a) => {
            let cfg = a.config()?;
            let res = run_experiment(&a, &cfg)?;
            println!("{} over {} patients", res.strategy, res.patients.len());
            for (method, m) in res.macro_metrics.iter() {
                println!(
                    "  {method:<14} acc {:.4}  spec {:.4}  prec {:.4}  recall {:.4}  f1 {:.4}",
                    m.accuracy, m.specificity, m.precision, m.recall, m.f1
                );
            }
        }
        Command::Cascade(a) => {
            let mut cfg = a.run.config()?;
            if !(0.0..=1.0).contains(&a.fraction) {
                bail!("fraction must lie in [0, 1]");
            }
            cfg.cascade_fractions = vec![0.0, a.fraction];
            cfg.cascade_two_sided = a.two_sided;
            let res = run_experiment(&a.run, &cfg)?;
            let eff = res.efficiency();
            let (plain, cascade) = (&eff[0], &eff[1]);
            println!("ensemble alone   f1 {:.4}", plain.f1);
            println!(
                "cascade at {:.2}  f1 {:.4}, {:.1}% of beats NPE-only, {} FLOPs saved",
                a.fraction,
                cascade.f1,
                100.0 * cascade.realized_fraction,
                cascade.flops_saved
            );
        }
        Command::SweepConfidence(a) => {
            let cfg = a.config()?;
            let res = run_experiment(&a, &cfg)?;
            println!("confidence,f1");
            for (c, f1) in res.f1_vs_confidence() {
                println!("{c:.2},{f1:.5}");
            }
        }
        Command::SweepThreshold(a) => {
            let mut cfg = a.run.config()?;
            if let Some(k) = a.residual {
                cfg.threshold_kind = k;
            }
            if let Some(s) = a.step {
                cfg.threshold_step = s;
            }
            let res = run_experiment(&a.run, &cfg)?;
            println!("threshold,f1");
            for (t, f1) in res.f1_vs_threshold() {
                println!("{t:.4},{f1:.5}");
            }
        }
        Command::ResidualAuc(a) => {
            let cfg = a.config()?;
            let (corpus, targets) = a.select(a.corpus()?)?;
            for (kind, v) in residual_auc(&corpus, &targets, &cfg)? {
                println!("{kind:<5} auc {v:.5}");
            }
        }
    }
    Ok(())
}
