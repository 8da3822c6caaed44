//! Monte Carlo accuracy sweeps.

use std::io::Write;
use std::ops::Range;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{ExperimentConfig, SchemeKind};
use crate::classifier::{predict, train, LabeledDataset, TrainConfig, TrainedModel};
use crate::emitter::Emitter;
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureMethod, PilotReference};
use crate::frontend::{phase_noise_path, receive, AntennaCapture, FrameContext, FrameStreams};
use crate::schemes::{
    dfs_recover_auto, estimate_variances, group_recoveries, group_weights, miws_from_labels, partition_groups,
    uws_from_labels, weighted_vote, VarianceEstimate,
};
use crate::signal::{ComplexSequence, Frame, FrameLayout, Purpose};

/// Exact header of the results CSV.
pub const RESULTS_HEADER: &str = "scheme,feature,snr_db,n_antennas,group_size,chi,trial,seed,accuracy";

/// Accuracy of one scheme in one trial at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub scheme: String,
    pub feature: FeatureMethod,
    pub snr_db: f64,
    pub n_antennas: usize,
    /// GDFWS group size; 0 for ungrouped schemes.
    pub group_size: usize,
    pub chi: String,
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
}

impl ResultRecord {
    pub fn to_csv_line(&self) -> String {
        let snr = if self.snr_db.is_infinite() {
            "inf".to_string()
        } else {
            format!("{}", self.snr_db)
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.feature.name(),
            snr,
            self.n_antennas,
            self.group_size,
            self.chi,
            self.trial,
            self.seed,
            self.accuracy
        )
    }
}

pub fn write_results<W: Write>(mut out: W, records: &[ResultRecord]) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    out.flush()
}

/// Everything shared by all trials.
pub struct Setup {
    pub layout: FrameLayout,
    pub emitters: Vec<Emitter>,
    pub extractor: FeatureExtractor,
    pub reference: PilotReference,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let layout = FrameLayout::default();
        let emitters = cfg
            .profiles
            .iter()
            .map(|p| Emitter::new(p.profile.clone(), cfg.emitter_config()))
            .collect::<Result<_>>()?;
        Ok(Self {
            layout,
            emitters,
            extractor: FeatureExtractor::new(cfg.feature, layout)?,
            reference: PilotReference::new(layout)?,
        })
    }
}

/// Global frame index of emitter `m`'s `j`-th frame: frames of all
/// emitters interleave, training frames first.
pub fn frame_index(j: usize, m: usize, emitters: usize) -> u64 {
    (j * emitters + m) as u64
}

/// Emitted waveforms of one trial, indexed `[m][j]`.
pub fn emit_trial(cfg: &ExperimentConfig, setup: &Setup, trial: usize) -> Result<Vec<Vec<ComplexSequence>>> {
    let m_count = setup.emitters.len();
    setup
        .emitters
        .iter()
        .enumerate()
        .map(|(m, e)| {
            (0..cfg.frames_per_emitter())
                .map(|j| {
                    let streams = FrameStreams {
                        seed: cfg.seed,
                        trial: trial as u64,
                        frame: frame_index(j, m, m_count),
                    };
                    let frame = Frame::random(setup.layout, &streams.stream(0, Purpose::Data))?;
                    e.emit(&frame)
                })
                .collect()
        })
        .collect()
}

/// Oscillator phase of every antenna for every frame of a trial,
/// indexed `[frame][antenna]`.
pub fn trial_phases(cfg: &ExperimentConfig, n: usize, trial: usize, frames: usize) -> Result<Vec<Vec<f64>>> {
    let rx = cfg.receiver(n)?;
    let streams = FrameStreams {
        seed: cfg.seed,
        trial: trial as u64,
        frame: 0,
    };
    let paths = rx
        .chi
        .iter()
        .enumerate()
        .map(|(i, &chi)| phase_noise_path(&streams.oscillator(i), chi, rx.phase_step, frames))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..frames).map(|k| paths.iter().map(|p| p[k]).collect()).collect())
}

/// Captures of one trial at one operating point, indexed `[m][j]`.
pub fn capture_trial(
    cfg: &ExperimentConfig,
    emitted: &[Vec<ComplexSequence>],
    n: usize,
    snr_db: f64,
    trial: usize,
    pilot_samples: usize,
) -> Result<Vec<Vec<AntennaCapture>>> {
    let m_count = emitted.len();
    let frames = m_count * cfg.frames_per_emitter();
    let phases = trial_phases(cfg, n, trial, frames)?;
    let rx = cfg.receiver(n)?;
    let ch = cfg.channel(snr_db);
    emitted
        .iter()
        .enumerate()
        .map(|(m, row)| {
            row.iter()
                .enumerate()
                .map(|(j, x2)| {
                    let k = frame_index(j, m, m_count);
                    let ctx = FrameContext {
                        streams: FrameStreams {
                            seed: cfg.seed,
                            trial: trial as u64,
                            frame: k,
                        },
                        emitter: m,
                        pilot_samples,
                    };
                    receive(x2, &ch, &rx, &phases[k as usize], &ctx)
                })
                .collect()
        })
        .collect()
}

/// What the configured schemes need from each capture.
struct Needs {
    antennas: Vec<usize>,
    dfs: bool,
    groups: Option<Vec<Range<usize>>>,
    variances: bool,
}

impl Needs {
    fn new(cfg: &ExperimentConfig, n: usize) -> Result<Self> {
        let mut antennas = Vec::new();
        let mut dfs = false;
        let mut groups = None;
        let mut variances = false;
        for s in &cfg.schemes {
            match *s {
                SchemeKind::Ors(i) => antennas.push(i),
                SchemeKind::Uws => antennas.extend(0..n),
                SchemeKind::Miws => {
                    antennas.extend(0..n);
                    variances = true;
                }
                SchemeKind::Dfs => dfs = true,
                SchemeKind::Gdfws => {
                    groups = Some(partition_groups(n, cfg.group_size)?);
                    variances = true;
                }
            }
        }
        antennas.sort_unstable();
        antennas.dedup();
        Ok(Self {
            antennas,
            dfs,
            groups,
            variances,
        })
    }
}

/// Features of one capture for every unit the schemes classify.
struct Units {
    antenna: Vec<Option<Vec<f64>>>,
    dfs: Option<Vec<f64>>,
    groups: Vec<Vec<f64>>,
    variances: Vec<VarianceEstimate>,
}

fn units_of(capture: &AntennaCapture, needs: &Needs, cfg: &ExperimentConfig, setup: &Setup) -> Result<Units> {
    let extract = |x: &[Complex64]| setup.extractor.extract(x).map(|f| f.values);
    let mut antenna = vec![None; capture.n_antennas()];
    for &i in &needs.antennas {
        antenna[i] = Some(extract(&capture.rows[i])?);
    }
    let dfs = if needs.dfs {
        Some(extract(&dfs_recover_auto(capture, cfg.ratio_mode)?.x_tilde)?)
    } else {
        None
    };
    let groups = match &needs.groups {
        Some(g) => group_recoveries(capture, g, cfg.ratio_mode)?
            .iter()
            .map(|r| extract(&r.x_tilde))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let variances = if needs.variances {
        estimate_variances(capture, cfg.mi_mode, &setup.reference)?
    } else {
        Vec::new()
    };
    Ok(Units {
        antenna,
        dfs,
        groups,
        variances,
    })
}

fn fit(features: Vec<Vec<f64>>, labels: &[usize]) -> Result<TrainedModel> {
    train(&LabeledDataset::new(features, labels.to_vec())?, TrainConfig::default())
}

fn classify(model: &TrainedModel, f: &[f64]) -> Result<usize> {
    Ok(predict(model, f)?.label)
}

/// Trains every scheme on the training frames and scores it on the test
/// frames of one operating point. Returns `(scheme, accuracy)` in config
/// order.
pub fn evaluate_point(
    cfg: &ExperimentConfig,
    setup: &Setup,
    captures: &[Vec<AntennaCapture>],
    n: usize,
    trial: usize,
) -> Result<Vec<(SchemeKind, f64)>> {
    let needs = Needs::new(cfg, n)?;
    let mut train_units = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_units = Vec::new();
    let mut test_labels = Vec::new();
    for (m, row) in captures.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            let u = units_of(c, &needs, cfg, setup)?;
            if j < cfg.train_frames {
                train_units.push(u);
                train_labels.push(m);
            } else {
                test_units.push(u);
                test_labels.push(m);
            }
        }
    }
    if cfg.shuffle_labels {
        let streams = FrameStreams {
            seed: cfg.seed,
            trial: trial as u64,
            frame: 0,
        };
        train_labels.shuffle(&mut streams.stream(0, Purpose::LabelShuffle).rng());
    }

    let mut antenna_models: Vec<Option<TrainedModel>> = vec![None; n];
    for &i in &needs.antennas {
        let f = train_units.iter().map(|u| u.antenna[i].clone().expect("antenna features")).collect();
        antenna_models[i] = Some(fit(f, &train_labels)?);
    }
    let dfs_model = if needs.dfs {
        Some(fit(
            train_units.iter().map(|u| u.dfs.clone().expect("dfs features")).collect(),
            &train_labels,
        )?)
    } else {
        None
    };
    let group_models: Vec<TrainedModel> = match &needs.groups {
        Some(g) => (0..g.len())
            .map(|gi| fit(train_units.iter().map(|u| u.groups[gi].clone()).collect(), &train_labels))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };

    let mut correct = vec![0usize; cfg.schemes.len()];
    for (u, &truth) in test_units.iter().zip(&test_labels) {
        let antenna_labels: Vec<Option<usize>> = antenna_models
            .iter()
            .zip(&u.antenna)
            .map(|(m, f)| match (m, f) {
                (Some(m), Some(f)) => classify(m, f).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<_>>()?;
        let all_labels = || -> Vec<usize> { antenna_labels.iter().map(|l| l.expect("all antennas classified")).collect() };
        for (s, hits) in cfg.schemes.iter().zip(correct.iter_mut()) {
            let label = match *s {
                SchemeKind::Ors(i) => antenna_labels[i].expect("ORS antenna classified"),
                SchemeKind::Uws => uws_from_labels(&all_labels())?.label,
                SchemeKind::Miws => miws_from_labels(&all_labels(), &u.variances)?.label,
                SchemeKind::Dfs => classify(dfs_model.as_ref().expect("dfs model"), u.dfs.as_ref().expect("dfs"))?,
                SchemeKind::Gdfws => {
                    let groups = needs.groups.as_ref().expect("groups");
                    let labels = group_models
                        .iter()
                        .zip(&u.groups)
                        .map(|(m, f)| classify(m, f))
                        .collect::<Result<Vec<_>>>()?;
                    weighted_vote(&labels, &group_weights(groups, &u.variances)?.omega)?.label
                }
            };
            *hits += usize::from(label == truth);
        }
    }
    let total = test_labels.len() as f64;
    Ok(cfg
        .schemes
        .iter()
        .zip(correct)
        .map(|(s, c)| (*s, c as f64 / total))
        .collect())
}

/// Sort key: position in the antenna sweep, scheme list and SNR list, then
/// trial.
type RecordKey = (usize, usize, usize, usize);

fn run_trial(cfg: &ExperimentConfig, setup: &Setup, trial: usize) -> Result<Vec<(RecordKey, ResultRecord)>> {
    let emitted = emit_trial(cfg, setup, trial)?;
    let mut out = Vec::new();
    for (ni, &n) in cfg.n_antennas.iter().enumerate() {
        for (si, &snr) in cfg.snr_list.iter().enumerate() {
            let captures = capture_trial(cfg, &emitted, n, snr, trial, setup.layout.pilot_samples())?;
            for (ki, (scheme, accuracy)) in evaluate_point(cfg, setup, &captures, n, trial)?.into_iter().enumerate() {
                out.push((
                    (ni, ki, si, trial),
                    ResultRecord {
                        scheme: scheme.name(),
                        feature: cfg.feature,
                        snr_db: snr,
                        n_antennas: n,
                        group_size: if scheme == SchemeKind::Gdfws { cfg.group_size } else { 0 },
                        chi: cfg.chi.summary(),
                        trial,
                        seed: cfg.seed,
                        accuracy,
                    },
                ));
            }
        }
    }
    Ok(out)
}

/// Runs every trial and returns records sorted by antenna count, scheme,
/// SNR and trial, in config order. Output does not depend on the number of
/// worker threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    let per_trial: Vec<Vec<(RecordKey, ResultRecord)>> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &setup, t))
            .collect::<Result<_>>()
    })?;
    let mut all: Vec<(RecordKey, ResultRecord)> = per_trial.into_iter().flatten().collect();
    all.sort_by_key(|(k, _)| *k);
    Ok(all.into_iter().map(|(_, r)| r).collect())
}

/// Mean accuracy per `(scheme, snr)` in first-seen order.
pub fn mean_accuracy(records: &[ResultRecord]) -> Vec<(String, f64, f64)> {
    let mut out: Vec<(String, f64, f64, usize)> = Vec::new();
    for r in records {
        match out
            .iter_mut()
            .find(|(s, snr, _, _)| *s == r.scheme && snr.to_bits() == r.snr_db.to_bits())
        {
            Some(e) => {
                e.2 += r.accuracy;
                e.3 += 1;
            }
            None => out.push((r.scheme.clone(), r.snr_db, r.accuracy, 1)),
        }
    }
    out.into_iter().map(|(s, snr, sum, n)| (s, snr, sum / n as f64)).collect()
}
