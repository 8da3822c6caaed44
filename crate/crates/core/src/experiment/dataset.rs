//! Capture dataset export.
//!
//! `gen_dataset` writes one JSON-lines file per `(emitter, trial)` named
//! `trial<T>_emitter<M>.jsonl`. Each line is one capture (see
//! [`crate::frontend::capture_to_json`]); lines run over the antenna sweep,
//! then the SNR list, then the frames of that emitter in order, training
//! frames first. `manifest.json` records the seed, the config digest, the
//! canonical config text and every file with its record count.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::ExperimentConfig;
use super::run::{capture_trial, emit_trial, Setup};
use crate::error::{Error, Result};
use crate::frontend::write_captures;
use crate::schemes::MiMode;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub emitter: usize,
    pub trial: usize,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<DatasetFile>,
}

impl Manifest {
    pub fn frame_records(&self) -> usize {
        self.files.iter().map(|f| f.records).sum()
    }
}

pub fn dataset_file_name(trial: usize, emitter: usize) -> String {
    format!("trial{trial:04}_emitter{emitter}.jsonl")
}

/// Generates every capture of the configured sweep into `out_dir`.
/// Ground truth is dropped when `mi_mode = pilot`.
pub fn gen_dataset(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let setup = Setup::new(cfg)?;
    let mut files = Vec::new();
    for trial in 0..cfg.trials {
        let emitted = emit_trial(cfg, &setup, trial)?;
        let mut per_emitter = vec![Vec::new(); emitted.len()];
        for &n in &cfg.n_antennas {
            for &snr in &cfg.snr_list {
                let captures = capture_trial(cfg, &emitted, n, snr, trial, setup.layout.pilot_samples())?;
                for (m, row) in captures.into_iter().enumerate() {
                    per_emitter[m].extend(row.into_iter().map(|mut c| {
                        if cfg.mi_mode == MiMode::Pilot {
                            c.truth = None;
                        }
                        c
                    }));
                }
            }
        }
        for (m, caps) in per_emitter.iter().enumerate() {
            let name = dataset_file_name(trial, m);
            let path = out_dir.join(&name);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_captures(BufWriter::new(f), caps).map_err(|e| Error::io(&path, e))?;
            files.push(DatasetFile {
                path: PathBuf::from(name),
                emitter: m,
                trial,
                records: caps.len(),
            });
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        config_sha256: cfg.digest(),
        files,
    };
    let value = json!({
        "seed": manifest.seed,
        "config_sha256": manifest.config_sha256,
        "config": cfg.to_text(),
        "emitters": cfg.profiles.iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
        "train_frames": cfg.train_frames,
        "test_frames": cfg.test_frames,
        "frame_records": manifest.frame_records(),
        "files": manifest.files.iter().map(|f| json!({
            "path": f.path.to_string_lossy(),
            "emitter": f.emitter,
            "trial": f.trial,
            "records": f.records,
        })).collect::<Vec<_>>(),
    });
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Parse(e.to_string()))? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
