//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional except `profiles`; unknown or repeated keys are errors.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `profiles` | required | comma list; `T1`..`T5` name the bundled profiles, anything else is a path relative to the config file |
//! | `train_frames` | 200 | training frames per emitter |
//! | `test_frames` | 100 | test frames per emitter |
//! | `trials` | 1000 | independent repetitions |
//! | `snr_list` | `15` | comma list of SNRs in dB; `inf` disables noise |
//! | `n_antennas` | 4 | comma list of antenna counts to sweep |
//! | `chi` | 0.01 | phase-noise bandwidth, one value or one per antenna |
//! | `schemes` | `ORS,UWS,MIWS,DFS` | any of `ORS`, `ORS<i>` (1-based antenna), `UWS`, `MIWS`, `DFS`, `GDFWS` |
//! | `feature` | `lms` | `itd` or `lms` |
//! | `group_size` | 128 | GDFWS group size |
//! | `jitter` | 0.003 | `off`, a constant offset, or `uniform:<bound>` |
//! | `lo_freq_norm` | 100 | carrier over sample rate, for the jitter phase term |
//! | `phase_step` | 0.01 | per-frame phase-noise increment variance over `2πχ` |
//! | `quantizer` | `on` | `on` or `off` |
//! | `quantizer_v` | 1 | full scale |
//! | `quantizer_eps` | 16 | resolution in bits |
//! | `fading` | `unit` | `unit` or `rayleigh` |
//! | `seed` | 0 | master seed |
//! | `mi_mode` | `oracle` | `oracle` or `pilot` |
//! | `ratio_mode` | `mean` | `mean` or `xcorr` |
//! | `pa_literal_power` | false | use `Σ b x^(2i+1)` instead of the baseband PA form |
//! | `shuffle_labels` | false | permute training labels (chance-level control) |
//! | `threads` | 0 | worker threads, 0 for one per core |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::emitter::{EmitterConfig, EmitterProfile, PaForm};
use crate::error::{Error, Result};
use crate::features::FeatureMethod;
use crate::frontend::{ChannelConfig, Fading, Jitter, Quantizer, ReceiverProfile};
use crate::schemes::{MiMode, RatioMode};

/// Which identification scheme a result row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// Single-antenna classification of the given antenna (0-based).
    Ors(usize),
    Uws,
    Miws,
    Dfs,
    Gdfws,
}

impl SchemeKind {
    /// `ORS` for antenna 0, `ORS<i>` with a 1-based index otherwise.
    pub fn name(self) -> String {
        match self {
            SchemeKind::Ors(0) => "ORS".into(),
            SchemeKind::Ors(i) => format!("ORS{}", i + 1),
            SchemeKind::Uws => "UWS".into(),
            SchemeKind::Miws => "MIWS".into(),
            SchemeKind::Dfs => "DFS".into(),
            SchemeKind::Gdfws => "GDFWS".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        Ok(match t.as_str() {
            "ORS" => SchemeKind::Ors(0),
            "UWS" => SchemeKind::Uws,
            "MIWS" => SchemeKind::Miws,
            "DFS" => SchemeKind::Dfs,
            "GDFWS" => SchemeKind::Gdfws,
            _ => match t.strip_prefix("ORS").map(str::parse::<usize>) {
                Some(Ok(i)) if i >= 1 => SchemeKind::Ors(i - 1),
                _ => return Err(Error::Config(format!("unknown scheme {s:?}"))),
            },
        })
    }
}

/// Phase-noise bandwidth for every antenna, or one value per antenna.
#[derive(Debug, Clone, PartialEq)]
pub enum ChiSpec {
    Scalar(f64),
    PerAntenna(Vec<f64>),
}

impl ChiSpec {
    pub fn for_antennas(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            ChiSpec::Scalar(c) => Ok(vec![*c; n]),
            ChiSpec::PerAntenna(v) if v.len() == n => Ok(v.clone()),
            ChiSpec::PerAntenna(v) => Err(Error::Config(format!(
                "chi lists {} values for {n} antennas",
                v.len()
            ))),
        }
    }

    /// Compact form used in the results CSV: values joined with `;`.
    pub fn summary(&self) -> String {
        match self {
            ChiSpec::Scalar(c) => format!("{c}"),
            ChiSpec::PerAntenna(v) => v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(";"),
        }
    }
}

/// A profile together with the name it was configured by.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSource {
    pub name: String,
    pub profile: EmitterProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profiles: Vec<ProfileSource>,
    pub train_frames: usize,
    pub test_frames: usize,
    pub trials: usize,
    pub snr_list: Vec<f64>,
    pub n_antennas: Vec<usize>,
    pub chi: ChiSpec,
    pub schemes: Vec<SchemeKind>,
    pub feature: FeatureMethod,
    pub group_size: usize,
    pub jitter: Jitter,
    pub lo_freq_norm: f64,
    pub phase_step: f64,
    pub quantizer: Option<Quantizer>,
    pub fading: Fading,
    pub seed: u64,
    pub mi_mode: MiMode,
    pub ratio_mode: RatioMode,
    pub pa_literal_power: bool,
    pub shuffle_labels: bool,
    pub threads: usize,
}

const KEYS: &[&str] = &[
    "profiles",
    "train_frames",
    "test_frames",
    "trials",
    "snr_list",
    "n_antennas",
    "chi",
    "schemes",
    "feature",
    "group_size",
    "jitter",
    "lo_freq_norm",
    "phase_step",
    "quantizer",
    "quantizer_v",
    "quantizer_eps",
    "fading",
    "seed",
    "mi_mode",
    "ratio_mode",
    "pa_literal_power",
    "shuffle_labels",
    "threads",
];

fn cfg_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e| cfg_err(key, format!("{v:?}: {e}")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        _ => parse_num(key, v),
    }
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(cfg_err(key, "empty list"));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(key, format!("expected true or false, got {v:?}"))),
    }
}

fn parse_jitter(v: &str) -> Result<Jitter> {
    let v = v.trim().to_ascii_lowercase();
    if v == "off" || v == "none" {
        return Ok(Jitter::Off);
    }
    if let Some(b) = v.strip_prefix("uniform:") {
        return Ok(Jitter::Uniform(parse_num("jitter", b)?));
    }
    Ok(Jitter::Constant(parse_num("jitter", &v)?))
}

fn jitter_text(j: Jitter) -> String {
    match j {
        Jitter::Off => "off".into(),
        Jitter::Constant(d) => format!("{d}"),
        Jitter::Uniform(b) => format!("uniform:{b}"),
    }
}

fn resolve_profile(entry: &str, base: &Path) -> Result<ProfileSource> {
    let profile = if matches!(entry, "T1" | "T2" | "T3" | "T4" | "T5") {
        EmitterProfile::builtin(entry)?
    } else {
        let path: PathBuf = base.join(entry);
        EmitterProfile::load(&path)?
    };
    Ok(ProfileSource {
        name: entry.to_string(),
        profile,
    })
}

impl ExperimentConfig {
    /// Defaults with the five bundled profiles.
    pub fn reference() -> Self {
        let profiles = (1..=5)
            .map(|i| {
                let name = format!("T{i}");
                ProfileSource {
                    profile: EmitterProfile::builtin(&name).expect("bundled profile"),
                    name,
                }
            })
            .collect();
        Self {
            profiles,
            train_frames: 200,
            test_frames: 100,
            trials: 1000,
            snr_list: vec![15.0],
            n_antennas: vec![4],
            chi: ChiSpec::Scalar(0.01),
            schemes: vec![
                SchemeKind::Ors(0),
                SchemeKind::Uws,
                SchemeKind::Miws,
                SchemeKind::Dfs,
            ],
            feature: FeatureMethod::Lms,
            group_size: 128,
            jitter: Jitter::Constant(0.003),
            lo_freq_norm: 100.0,
            phase_step: 0.01,
            quantizer: Some(Quantizer::default()),
            fading: Fading::Unit,
            seed: 0,
            mi_mode: MiMode::Oracle,
            ratio_mode: RatioMode::Mean,
            pa_literal_power: false,
            shuffle_labels: false,
            threads: 0,
        }
    }

    /// Parses config text; relative profile paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        let mut c = Self::reference();
        let profiles = entries
            .get("profiles")
            .ok_or_else(|| Error::Config("missing required key \"profiles\"".into()))?;
        c.profiles = parse_list("profiles", profiles, |_, s| resolve_profile(s, base))?;
        let mut quantizer = Quantizer::default();
        let mut quantizer_on = true;
        for (k, v) in &entries {
            let k = k.as_str();
            match k {
                "profiles" => {}
                "train_frames" => c.train_frames = parse_num(k, v)?,
                "test_frames" => c.test_frames = parse_num(k, v)?,
                "trials" => c.trials = parse_num(k, v)?,
                "snr_list" => c.snr_list = parse_list(k, v, parse_f64)?,
                "n_antennas" => c.n_antennas = parse_list(k, v, parse_num)?,
                "chi" => {
                    let list = parse_list(k, v, parse_f64)?;
                    c.chi = if list.len() == 1 && !v.contains(',') {
                        ChiSpec::Scalar(list[0])
                    } else {
                        ChiSpec::PerAntenna(list)
                    };
                }
                "schemes" => c.schemes = parse_list(k, v, |_, s| SchemeKind::parse(s))?,
                "feature" => c.feature = v.parse().map_err(|e| cfg_err(k, e))?,
                "group_size" => c.group_size = parse_num(k, v)?,
                "jitter" => c.jitter = parse_jitter(v)?,
                "lo_freq_norm" => c.lo_freq_norm = parse_f64(k, v)?,
                "phase_step" => c.phase_step = parse_f64(k, v)?,
                "quantizer" => quantizer_on = parse_bool(k, v)?,
                "quantizer_v" => quantizer.v = parse_f64(k, v)?,
                "quantizer_eps" => quantizer.eps = parse_num(k, v)?,
                "fading" => {
                    c.fading = match v.to_ascii_lowercase().as_str() {
                        "unit" => Fading::Unit,
                        "rayleigh" => Fading::Rayleigh,
                        _ => return Err(cfg_err(k, format!("expected unit or rayleigh, got {v:?}"))),
                    }
                }
                "seed" => c.seed = parse_num(k, v)?,
                "mi_mode" => c.mi_mode = v.parse()?,
                "ratio_mode" => c.ratio_mode = v.parse()?,
                "pa_literal_power" => c.pa_literal_power = parse_bool(k, v)?,
                "shuffle_labels" => c.shuffle_labels = parse_bool(k, v)?,
                "threads" => c.threads = parse_num(k, v)?,
                _ => unreachable!("key list and match arms disagree on {k}"),
            }
        }
        c.quantizer = quantizer_on.then_some(quantizer);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(cfg_err("profiles", "at least one emitter is needed"));
        }
        for (key, v) in [
            ("train_frames", self.train_frames),
            ("test_frames", self.test_frames),
            ("trials", self.trials),
        ] {
            if v == 0 {
                return Err(cfg_err(key, "must be positive"));
            }
        }
        if self.schemes.is_empty() {
            return Err(cfg_err("schemes", "empty"));
        }
        for &n in &self.n_antennas {
            if n == 0 {
                return Err(cfg_err("n_antennas", "must be positive"));
            }
            self.chi.for_antennas(n)?;
            self.receiver(n)?.validate()?;
            for s in &self.schemes {
                match s {
                    SchemeKind::Ors(i) if *i >= n => {
                        return Err(cfg_err("schemes", format!("{} needs more than {n} antennas", s.name())))
                    }
                    SchemeKind::Dfs if n < 2 => return Err(cfg_err("schemes", "DFS needs at least 2 antennas")),
                    SchemeKind::Gdfws => {
                        crate::schemes::partition_groups(n, self.group_size).map_err(|e| cfg_err("group_size", e))?;
                    }
                    _ => {}
                }
            }
        }
        for &snr in &self.snr_list {
            ChannelConfig::new(snr).validate().map_err(|e| cfg_err("snr_list", e))?;
        }
        if !(self.phase_step >= 0.0 && self.phase_step.is_finite()) {
            return Err(cfg_err("phase_step", "must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn receiver(&self, n: usize) -> Result<ReceiverProfile> {
        Ok(ReceiverProfile {
            chi: self.chi.for_antennas(n)?,
            jitter: self.jitter,
            lo_freq_norm: self.lo_freq_norm,
            quantizer: self.quantizer,
            phase_step: self.phase_step,
        })
    }

    pub fn channel(&self, snr_db: f64) -> ChannelConfig {
        ChannelConfig {
            snr_db,
            fading: self.fading,
        }
    }

    pub fn emitter_config(&self) -> EmitterConfig {
        EmitterConfig {
            pa_form: if self.pa_literal_power {
                PaForm::LiteralPower
            } else {
                PaForm::Baseband
            },
            ..EmitterConfig::default()
        }
    }

    pub fn frames_per_emitter(&self) -> usize {
        self.train_frames + self.test_frames
    }

    /// Canonical text form; parsing it back yields an equal config.
    /// `threads` is left out because it never changes results.
    pub fn to_text(&self) -> String {
        let list = |v: Vec<String>| v.join(",");
        let f = |x: f64| if x.is_infinite() { "inf".to_string() } else { format!("{x}") };
        let mut s = String::new();
        let _ = writeln!(s, "profiles = {}", list(self.profiles.iter().map(|p| p.name.clone()).collect()));
        let _ = writeln!(s, "train_frames = {}", self.train_frames);
        let _ = writeln!(s, "test_frames = {}", self.test_frames);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "snr_list = {}", list(self.snr_list.iter().map(|&x| f(x)).collect()));
        let _ = writeln!(s, "n_antennas = {}", list(self.n_antennas.iter().map(|n| n.to_string()).collect()));
        let chi = match &self.chi {
            ChiSpec::Scalar(c) => f(*c),
            ChiSpec::PerAntenna(v) => list(v.iter().map(|&x| f(x)).collect()),
        };
        let _ = writeln!(s, "chi = {chi}");
        let _ = writeln!(s, "schemes = {}", list(self.schemes.iter().map(|k| k.name()).collect()));
        let _ = writeln!(s, "feature = {}", self.feature.name());
        let _ = writeln!(s, "group_size = {}", self.group_size);
        let _ = writeln!(s, "jitter = {}", jitter_text(self.jitter));
        let _ = writeln!(s, "lo_freq_norm = {}", f(self.lo_freq_norm));
        let _ = writeln!(s, "phase_step = {}", f(self.phase_step));
        let q = self.quantizer.unwrap_or_default();
        let _ = writeln!(s, "quantizer = {}", if self.quantizer.is_some() { "on" } else { "off" });
        let _ = writeln!(s, "quantizer_v = {}", f(q.v));
        let _ = writeln!(s, "quantizer_eps = {}", q.eps);
        let _ = writeln!(
            s,
            "fading = {}",
            match self.fading {
                Fading::Unit => "unit",
                Fading::Rayleigh => "rayleigh",
            }
        );
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "mi_mode = {}", self.mi_mode.name());
        let _ = writeln!(s, "ratio_mode = {}", self.ratio_mode.name());
        let _ = writeln!(s, "pa_literal_power = {}", self.pa_literal_power);
        let _ = writeln!(s, "shuffle_labels = {}", self.shuffle_labels);
        s
    }

    /// SHA-256 of [`ExperimentConfig::to_text`] plus the profile contents,
    /// hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        for p in &self.profiles {
            h.update(p.profile.to_text().as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
