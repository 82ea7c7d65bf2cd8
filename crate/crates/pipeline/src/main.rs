//! `srnr`: CLI for the spiking rotating-neuron-reservoir gesture pipeline.
//!
//! Subcommands: `ingest` (validate a dataset), `synth` (generate a labeled
//! synthetic dataset), `run` (cross-validated training + evaluation),
//! `sweep` (accuracy vs reservoir size), `export-features` (pre/post
//! reservoir feature matrices), `calibrate` (per-subject encoder gains).
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.

use clap::{Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use srnr_core::signal::RawRecording;
use srnr_pipeline::{
    config::PipelineConfig,
    manifest::{ingest_dataset, write_subject_csv, DatasetManifest, SubjectEntry},
    runner::{calibrate_subjects, export_features, run_pipeline, sweep_network_size, FeatureStage},
    synth::{synthesize_dataset, SynthSpec},
    PipelineError,
};

#[derive(Parser)]
#[command(
    name = "srnr",
    version,
    about = "Spiking rotating-neuron-reservoir gesture classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Pre,
    Post,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset manifest and report per-class sample counts
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated subject ids to keep (default: all)
        #[arg(long)]
        subjects: Option<String>,
        /// Write the summary JSON here instead of stdout only
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a synthetic labeled dataset (CSVs plus a manifest)
    Synth {
        /// Movement classes (labels 1..=classes; 0 is rest)
        #[arg(long, default_value_t = 5)]
        classes: u16,
        /// Repetitions per class
        #[arg(long, default_value_t = 6)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of subjects to generate
        #[arg(long, default_value_t = 1)]
        subjects: u32,
        #[arg(long, default_value_t = 2000.0)]
        sample_rate: f64,
        #[arg(long, default_value_t = 12)]
        channels: usize,
        #[arg(long, default_value_t = 5000.0)]
        movement_ms: f64,
        #[arg(long, default_value_t = 3000.0)]
        rest_ms: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the full pipeline (cross-validated) and write reports
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Master seed override for split and reservoir seeds
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        subjects: Option<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Worker threads (overrides config; 0 = all cores)
        #[arg(long)]
        workers: Option<usize>,
        /// Also write each trained fold model as JSON
        #[arg(long)]
        save_models: bool,
    },
    /// Run once per reservoir size and tabulate accuracy against size
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated reservoir sizes
        #[arg(long, default_value = "1,2,5,10,15,20")]
        sizes: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        subjects: Option<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Export labeled spike-count feature matrices as CSV
    ExportFeatures {
        /// Which layer to export: pre (encoder) or post (reservoir)
        #[arg(long, value_enum)]
        stage: Stage,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        subjects: Option<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Calibrate encoder gains per subject and write them as JSON
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        subjects: Option<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<PipelineConfig, PipelineError> {
    let mut config = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = seed {
        config = config.with_master_seed(seed);
    }
    if let Some(workers) = workers {
        config.workers = workers;
    }
    config.validate()?;
    Ok(config)
}

fn parse_subject_filter(filter: Option<&str>) -> Result<Option<Vec<u32>>, PipelineError> {
    filter
        .map(|s| {
            s.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<u32>()
                        .map_err(|e| PipelineError::Config(format!("bad subject id '{tok}': {e}")))
                })
                .collect()
        })
        .transpose()
}

fn load_recordings(
    manifest_path: &Path,
    filter: Option<&str>,
) -> Result<Vec<RawRecording>, PipelineError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let subjects = ingest_dataset(&manifest, &base)?;
    let keep = parse_subject_filter(filter)?;
    let recordings: Vec<RawRecording> = subjects
        .into_iter()
        .map(|s| s.recording)
        .filter(|r| keep.as_ref().is_none_or(|ids| ids.contains(&r.subject_id)))
        .collect();
    if recordings.is_empty() {
        return Err(PipelineError::Data(
            "subject filter matched no subjects".into(),
        ));
    }
    Ok(recordings)
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| PipelineError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn parse_sizes(sizes: &str) -> Result<Vec<usize>, PipelineError> {
    sizes
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|e| PipelineError::Config(format!("bad size '{tok}': {e}")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest {
            manifest,
            subjects,
            out_dir,
        } => {
            let manifest_data = DatasetManifest::load(&manifest)?;
            let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
            let loaded = ingest_dataset(&manifest_data, &base)?;
            let keep = parse_subject_filter(subjects.as_deref())?;
            let mut summary: BTreeMap<u32, BTreeMap<u16, usize>> = BTreeMap::new();
            for s in &loaded {
                if keep
                    .as_ref()
                    .is_none_or(|ids| ids.contains(&s.recording.subject_id))
                {
                    summary.insert(s.recording.subject_id, s.class_sample_counts.clone());
                }
            }
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            println!("{json}");
            if let Some(dir) = out_dir {
                ensure_dir(&dir)?;
                std::fs::write(dir.join("ingest.json"), &json)
                    .map_err(|e| PipelineError::Runtime(e.to_string()))?;
            }
            Ok(())
        }

        Command::Synth {
            classes,
            reps,
            seed,
            subjects,
            sample_rate,
            channels,
            movement_ms,
            rest_ms,
            out_dir,
        } => {
            ensure_dir(&out_dir)?;
            let mut entries = Vec::new();
            for i in 0..subjects {
                let spec = SynthSpec {
                    n_classes: classes,
                    reps,
                    seed: seed.wrapping_add(u64::from(i)),
                    sample_rate_hz: sample_rate,
                    channels,
                    movement_ms,
                    rest_ms,
                    subject_id: i + 1,
                };
                let rec = synthesize_dataset(&spec)?;
                let name = format!("subject_{:03}.csv", i + 1);
                write_subject_csv(&rec, &out_dir.join(&name))?;
                entries.push(SubjectEntry {
                    subject_id: i + 1,
                    csv_path: PathBuf::from(name),
                    sample_rate_hz: sample_rate,
                    channels,
                });
            }
            let manifest = DatasetManifest {
                subjects: entries,
                allowed_labels: Some((0..=classes).collect()),
            };
            manifest.save(&out_dir.join("manifest.json"))?;
            println!(
                "wrote {} subject(s), {} classes, manifest at {}",
                subjects,
                classes,
                out_dir.join("manifest.json").display()
            );
            Ok(())
        }

        Command::Run {
            config,
            manifest,
            seed,
            subjects,
            out_dir,
            workers,
            save_models,
        } => {
            let config = load_config(config.as_deref(), seed, workers)?;
            let recordings = load_recordings(&manifest, subjects.as_deref())?;
            let output = run_pipeline(&config, &recordings)?;
            ensure_dir(&out_dir)?;
            output.report.save_json(&out_dir.join("report.json"))?;
            std::fs::write(out_dir.join("report.md"), output.report.to_markdown())
                .map_err(|e| PipelineError::Runtime(e.to_string()))?;
            output
                .report
                .save_confusion_csv(&out_dir.join("confusion.csv"))?;
            if save_models {
                for model in &output.models {
                    let name = format!("model_s{:03}_f{}.json", model.subject_id, model.fold);
                    model.save_json(&out_dir.join(name))?;
                }
            }
            match output.report.overall.std_accuracy {
                Some(std) => println!(
                    "overall accuracy {:.1}% ± {:.1}% over {} subject(s); reports in {}",
                    output.report.overall.mean_accuracy,
                    std,
                    output.report.subjects.len(),
                    out_dir.display()
                ),
                None => println!(
                    "overall accuracy {:.1}% over {} subject(s); reports in {}",
                    output.report.overall.mean_accuracy,
                    output.report.subjects.len(),
                    out_dir.display()
                ),
            }
            Ok(())
        }

        Command::Sweep {
            config,
            manifest,
            sizes,
            seed,
            subjects,
            out_dir,
            workers,
        } => {
            let config = load_config(config.as_deref(), seed, workers)?;
            let sizes = parse_sizes(&sizes)?;
            let recordings = load_recordings(&manifest, subjects.as_deref())?;
            let table = sweep_network_size(&config, &sizes, &recordings)?;
            ensure_dir(&out_dir)?;
            std::fs::write(out_dir.join("sweep.csv"), table.to_csv())
                .map_err(|e| PipelineError::Runtime(e.to_string()))?;
            std::fs::write(
                out_dir.join("sweep.json"),
                serde_json::to_string_pretty(&table).expect("table serializes"),
            )
            .map_err(|e| PipelineError::Runtime(e.to_string()))?;
            print!("{}", table.to_csv());
            Ok(())
        }

        Command::ExportFeatures {
            stage,
            config,
            manifest,
            seed,
            subjects,
            out_dir,
            workers,
        } => {
            let config = load_config(config.as_deref(), seed, workers)?;
            let recordings = load_recordings(&manifest, subjects.as_deref())?;
            let feature_stage = match stage {
                Stage::Pre => FeatureStage::PreReservoir,
                Stage::Post => FeatureStage::PostReservoir,
            };
            let table = export_features(&config, feature_stage, &recordings)?;
            ensure_dir(&out_dir)?;
            let name = match stage {
                Stage::Pre => "features_pre.csv",
                Stage::Post => "features_post.csv",
            };
            std::fs::write(out_dir.join(name), table.to_csv())
                .map_err(|e| PipelineError::Runtime(e.to_string()))?;
            println!(
                "wrote {} rows x {} features to {}",
                table.rows.len(),
                table.dim,
                out_dir.join(name).display()
            );
            Ok(())
        }

        Command::Calibrate {
            config,
            manifest,
            seed,
            subjects,
            out_dir,
            workers,
        } => {
            let config = load_config(config.as_deref(), seed, workers)?;
            let recordings = load_recordings(&manifest, subjects.as_deref())?;
            let calibrations = calibrate_subjects(&config, &recordings)?;
            let json = serde_json::to_string_pretty(
                &calibrations
                    .iter()
                    .map(|(id, cal)| (id.to_string(), cal))
                    .collect::<BTreeMap<_, _>>(),
            )
            .expect("calibrations serialize");
            ensure_dir(&out_dir)?;
            std::fs::write(out_dir.join("calibration.json"), &json)
                .map_err(|e| PipelineError::Runtime(e.to_string()))?;
            println!("{json}");
            Ok(())
        }
    }
}
