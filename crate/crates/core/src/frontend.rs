//! Channel and multi-antenna receiver impairments.
//!
//! Each antenna sees the same emitted waveform through its own fading
//! coefficient, its own oscillator phase noise (constant within a frame,
//! Wiener-distributed across frames), a sampling-jitter stage shared by the
//! ADC clock, additive white noise and a uniform quantizer:
//!
//! ```text
//! y_i(k, n) = Q[ h_i(k) e^{-jθ_i(k)} x̂(k, n) + w_i(k, n) ]
//! ```
//!
//! where `x̂` is the jittered emitter output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use crate::error::{invalid, Error, Result};
use crate::signal::{complex_gaussian, mean_power, ComplexSequence, Purpose, RandomStream, StreamCoords};

/// Floor for noise variances handed to ratios and logarithms.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fading {
    /// `h_i(k) = 1`.
    #[default]
    Unit,
    /// `h_i(k) ~ CN(0, 1)`, redrawn per frame and antenna.
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// Signal-to-noise ratio in dB; `f64::INFINITY` switches the noise off.
    pub snr_db: f64,
    pub fading: Fading,
}

impl ChannelConfig {
    pub fn new(snr_db: f64) -> Self {
        Self {
            snr_db,
            fading: Fading::Unit,
        }
    }

    /// `σ_w² = σ_x² σ_h² 10^{-SNR/10}`.
    pub fn noise_variance(&self, signal_power: f64) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            signal_power * 10f64.powf(-self.snr_db / 10.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(invalid!("SNR must be finite or +inf, got {}", self.snr_db));
        }
        Ok(())
    }
}

/// Relative sampling jitter `δ(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Jitter {
    #[default]
    Off,
    /// Same `δ` at every sample.
    Constant(f64),
    /// `δ(n)` drawn independently per sample from `U(-d, d)`.
    Uniform(f64),
}

impl Jitter {
    fn bound(self) -> f64 {
        match self {
            Jitter::Off => 0.0,
            Jitter::Constant(d) | Jitter::Uniform(d) => d.abs(),
        }
    }
}

/// Mid-tread ADC model with full scale `[-v, v]` and `eps` bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub v: f64,
    pub eps: u32,
}

impl Quantizer {
    pub fn step(&self) -> f64 {
        2f64.powi(1 - self.eps as i32) * self.v
    }
}

impl Default for Quantizer {
    fn default() -> Self {
        Self { v: 1.0, eps: 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverProfile {
    /// Phase-noise bandwidth per antenna; its length is the antenna count.
    pub chi: Vec<f64>,
    pub jitter: Jitter,
    /// Carrier-frequency × sample-period product `f′T`.
    pub lo_freq_norm: f64,
    pub quantizer: Option<Quantizer>,
    /// Frame duration in the normalized time of the phase-noise process.
    /// The frame-to-frame increment of `θ` has variance `2πχ·phase_step`.
    pub phase_step: f64,
}

impl ReceiverProfile {
    /// Receiver with `n` antennas and the reference impairment settings.
    pub fn new(n: usize, chi: f64) -> Self {
        Self {
            chi: vec![chi; n],
            jitter: Jitter::Constant(0.003),
            lo_freq_norm: 100.0,
            quantizer: Some(Quantizer::default()),
            phase_step: 0.01,
        }
    }

    /// Receiver that passes the signal through untouched.
    pub fn ideal(n: usize) -> Self {
        Self {
            chi: vec![0.0; n],
            jitter: Jitter::Off,
            lo_freq_norm: 0.0,
            quantizer: None,
            phase_step: 0.0,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.chi.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi.is_empty() {
            return Err(invalid!("receiver needs at least one antenna"));
        }
        if let Some(c) = self.chi.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(invalid!("phase-noise bandwidth must be non-negative, got {c}"));
        }
        if !(self.jitter.bound() < 0.5) {
            return Err(invalid!("|jitter| must be below 0.5, got {}", self.jitter.bound()));
        }
        if let Some(q) = self.quantizer {
            if !(q.v > 0.0) || q.eps < 1 {
                return Err(invalid!("quantizer needs V > 0 and eps >= 1, got V={} eps={}", q.v, q.eps));
            }
        }
        if !(self.phase_step >= 0.0) {
            return Err(invalid!("phase_step must be non-negative"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Phase noise
// ---------------------------------------------------------------------------

/// Phases `θ(0..count)` of one oscillator.
///
/// `θ(0) ~ N(0, 2πχ)` and each later frame adds an independent
/// `N(0, 2πχ·step)` increment. The whole path comes from one stream so any
/// prefix is reproducible on its own.
pub fn phase_noise_path(stream: &RandomStream, chi: f64, step: f64, count: usize) -> Result<Vec<f64>> {
    if !(chi >= 0.0) {
        return Err(invalid!("phase-noise bandwidth must be non-negative, got {chi}"));
    }
    let mut rng = stream.rng();
    let start_sd = (2.0 * PI * chi).sqrt();
    let step_sd = (2.0 * PI * chi * step).sqrt();
    let mut theta = 0.0;
    Ok((0..count)
        .map(|k| {
            let g: f64 = rng.sample(StandardNormal);
            theta += if k == 0 { start_sd * g } else { step_sd * g };
            theta
        })
        .collect())
}

/// `θ(frame_index)` of the oscillator driven by `stream`.
pub fn sample_phase_noise(stream: &RandomStream, chi: f64, step: f64, frame_index: u64) -> Result<f64> {
    let path = phase_noise_path(stream, chi, step, frame_index as usize + 1)?;
    Ok(path[frame_index as usize])
}

// ---------------------------------------------------------------------------
// Jitter and quantization
// ---------------------------------------------------------------------------

/// Resamples `x` at `n + δ(n)` by linear interpolation and applies the
/// carrier phase `e^{-j2π f′T δ(n)}`.
///
/// Beyond the last sample the final segment is extrapolated.
pub fn apply_jitter(x: &[Complex64], delta: &[f64], lo_freq_norm: f64) -> Result<ComplexSequence> {
    if delta.len() != x.len() {
        return Err(invalid!("jitter length {} does not match signal length {}", delta.len(), x.len()));
    }
    if let Some(d) = delta.iter().find(|d| !(d.abs() < 0.5)) {
        return Err(invalid!("|jitter| must be below 0.5, got {d}"));
    }
    if x.len() < 2 {
        return Ok(x.to_vec().into());
    }
    let last = x.len() - 2;
    Ok(x.iter()
        .enumerate()
        .map(|(n, _)| {
            let d = delta[n];
            if d == 0.0 {
                return x[n];
            }
            let pos = n as f64 + d;
            let i = (pos.floor().max(0.0) as usize).min(last);
            let frac = pos - i as f64;
            let value = x[i] + (x[i + 1] - x[i]) * frac;
            value * Complex64::from_polar(1.0, -2.0 * PI * lo_freq_norm * d)
        })
        .collect())
}

/// Per-sample jitter offsets for one frame.
pub fn jitter_offsets(jitter: Jitter, stream: &RandomStream, len: usize) -> Vec<f64> {
    match jitter {
        Jitter::Off => vec![0.0; len],
        Jitter::Constant(d) => vec![d; len],
        Jitter::Uniform(d) => {
            let mut rng = stream.rng();
            (0..len).map(|_| rng.random_range(-d.abs()..=d.abs())).collect()
        }
    }
}

/// Quantized samples and the number of real channels that hit full scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub samples: ComplexSequence,
    pub saturated: usize,
}

/// Uniform mid-tread quantizer applied to I and Q independently.
pub fn quantize(x: &[Complex64], q: Quantizer) -> Result<Quantized> {
    if !(q.v > 0.0) || q.eps < 1 {
        return Err(invalid!("quantizer needs V > 0 and eps >= 1"));
    }
    let step = q.step();
    let mut saturated = 0;
    let mut channel = |v: f64| {
        if v.abs() > q.v {
            saturated += 1;
        }
        (step * (v / step).round()).clamp(-q.v, q.v)
    };
    let samples = x
        .iter()
        .map(|z| Complex64::new(channel(z.re), channel(z.im)))
        .collect();
    Ok(Quantized { samples, saturated })
}

// ---------------------------------------------------------------------------
// Capture
// ---------------------------------------------------------------------------

/// Ground truth recorded alongside a capture for oracle processing.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureTruth {
    /// `h_i(k)` per antenna.
    pub h: Vec<Complex64>,
    /// `θ_i(k)` per antenna.
    pub theta: Vec<f64>,
    /// Jittered emitter waveform `x̂`.
    pub clean: ComplexSequence,
    /// Mean power of the emitter waveform before jitter.
    pub x2_power: f64,
    /// Configured `σ_w²`.
    pub noise_var: f64,
    /// Mean `|y_i − h_i x − w_i|²` per antenna: the power of everything the
    /// receiver added besides fading and thermal noise.
    pub distortion_power: Vec<f64>,
}

/// One frame as seen by every antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaCapture {
    /// `N` rows of `L` samples.
    pub rows: Vec<ComplexSequence>,
    pub truth: Option<CaptureTruth>,
    pub frame_index: u64,
    pub emitter: usize,
    pub snr_db: f64,
    /// Number of leading samples that carry only pilot symbols.
    pub pilot_samples: usize,
    pub saturated: usize,
}

impl AntennaCapture {
    pub fn n_antennas(&self) -> usize {
        self.rows.len()
    }

    pub fn len(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Capture restricted to a subset of antennas, in the given order.
    pub fn select(&self, antennas: &[usize]) -> AntennaCapture {
        let truth = self.truth.as_ref().map(|t| CaptureTruth {
            h: antennas.iter().map(|&i| t.h[i]).collect(),
            theta: antennas.iter().map(|&i| t.theta[i]).collect(),
            distortion_power: antennas.iter().map(|&i| t.distortion_power[i]).collect(),
            ..t.clone()
        });
        AntennaCapture {
            rows: antennas.iter().map(|&i| self.rows[i].clone()).collect(),
            truth,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> AntennaCapture {
        AntennaCapture {
            rows: Vec::new(),
            truth: None,
            frame_index: self.frame_index,
            emitter: self.emitter,
            snr_db: self.snr_db,
            pilot_samples: self.pilot_samples,
            saturated: self.saturated,
        }
    }
}

/// Stream coordinates of one frame; antenna and purpose are filled per draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameStreams {
    pub seed: u64,
    pub trial: u64,
    pub frame: u64,
}

impl FrameStreams {
    pub fn stream(&self, antenna: usize, purpose: Purpose) -> RandomStream {
        RandomStream::new(
            self.seed,
            StreamCoords::new(self.trial, self.frame, antenna as u64, purpose),
        )
    }

    /// Stream of antenna `i`'s oscillator, shared by every frame of a trial.
    pub fn oscillator(&self, antenna: usize) -> RandomStream {
        RandomStream::new(
            self.seed,
            StreamCoords::new(self.trial, 0, antenna as u64, Purpose::PhaseNoise),
        )
    }
}

/// Frame-level metadata for [`receive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameContext {
    pub streams: FrameStreams,
    pub emitter: usize,
    pub pilot_samples: usize,
}

/// Pushes the emitted waveform through channel and receiver.
///
/// `phases` are the oscillator phases `θ_i(k)` of this frame, one per
/// antenna; see [`phase_noise_path`]. Noise draws do not depend on the SNR,
/// only their scale does, so SNR sweeps share one noise realisation.
pub fn receive(
    x2: &[Complex64],
    ch: &ChannelConfig,
    rx: &ReceiverProfile,
    phases: &[f64],
    ctx: &FrameContext,
) -> Result<AntennaCapture> {
    if x2.is_empty() {
        return Err(invalid!("cannot receive an empty waveform"));
    }
    ch.validate()?;
    rx.validate()?;
    let n = rx.n_antennas();
    if phases.len() != n {
        return Err(invalid!("{} phases given for {} antennas", phases.len(), n));
    }
    let streams = ctx.streams;
    let x2_power = mean_power(x2);
    let noise_var = ch.noise_variance(x2_power);
    let delta = jitter_offsets(rx.jitter, &streams.stream(0, Purpose::Jitter), x2.len());
    let clean = apply_jitter(x2, &delta, rx.lo_freq_norm)?;

    let mut rows = Vec::with_capacity(n);
    let mut h_all = Vec::with_capacity(n);
    let mut distortion_power = Vec::with_capacity(n);
    let mut saturated = 0;
    for (i, &theta) in phases.iter().enumerate() {
        let h = match ch.fading {
            Fading::Unit => Complex64::new(1.0, 0.0),
            Fading::Rayleigh => complex_gaussian(&mut streams.stream(i, Purpose::Fading).rng(), 1.0),
        };
        let gain = h * Complex64::from_polar(1.0, -theta);
        let mut noise_rng = streams.stream(i, Purpose::Noise).rng();
        let noise: Vec<Complex64> = (0..x2.len())
            .map(|_| complex_gaussian(&mut noise_rng, 1.0) * noise_var.sqrt())
            .collect();
        let mut row: ComplexSequence = clean.iter().zip(&noise).map(|(x, w)| gain * x + w).collect();
        if let Some(q) = rx.quantizer {
            let out = quantize(&row, q)?;
            saturated += out.saturated;
            row = out.samples;
        }
        let dist = row
            .iter()
            .zip(x2)
            .zip(&noise)
            .map(|((y, x), w)| (y - h * x - w).norm_sqr())
            .sum::<f64>()
            / x2.len() as f64;
        rows.push(row);
        h_all.push(h);
        distortion_power.push(dist);
    }

    Ok(AntennaCapture {
        rows,
        truth: Some(CaptureTruth {
            h: h_all,
            theta: phases.to_vec(),
            clean,
            x2_power,
            noise_var,
            distortion_power,
        }),
        frame_index: streams.frame,
        emitter: ctx.emitter,
        snr_db: ch.snr_db,
        pilot_samples: ctx.pilot_samples,
        saturated,
    })
}

/// [`receive`] with the oscillator phases drawn for this frame index.
///
/// Regenerates each antenna's phase path from the start of the trial; batch
/// code should use [`phase_noise_path`] once per trial instead.
pub fn receive_frame(
    x2: &[Complex64],
    ch: &ChannelConfig,
    rx: &ReceiverProfile,
    ctx: &FrameContext,
) -> Result<AntennaCapture> {
    let phases = rx
        .chi
        .iter()
        .enumerate()
        .map(|(i, &chi)| sample_phase_noise(&ctx.streams.oscillator(i), chi, rx.phase_step, ctx.streams.frame))
        .collect::<Result<Vec<_>>>()?;
    receive(x2, ch, rx, &phases, ctx)
}

// ---------------------------------------------------------------------------
// JSON-lines persistence
// ---------------------------------------------------------------------------

fn push_f64(s: &mut String, v: f64) {
    if v.is_finite() {
        let _ = write!(s, "{v:.16e}");
    } else {
        s.push_str("null");
    }
}

fn push_complex_list(s: &mut String, v: &[Complex64]) {
    s.push('[');
    for (i, z) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push('[');
        push_f64(s, z.re);
        s.push(',');
        push_f64(s, z.im);
        s.push(']');
    }
    s.push(']');
}

fn push_real_list(s: &mut String, v: &[f64]) {
    s.push('[');
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        push_f64(s, *x);
    }
    s.push(']');
}

/// One JSON object on a single line. Floats carry 17 significant digits;
/// an infinite SNR is written as `null`.
pub fn capture_to_json(c: &AntennaCapture) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{{\"emitter_id\":{},\"frame_index\":{},\"snr_db\":",
        c.emitter, c.frame_index
    );
    push_f64(&mut s, c.snr_db);
    let _ = write!(
        s,
        ",\"n_antennas\":{},\"pilot_samples\":{},\"saturated\":{},\"samples\":[",
        c.n_antennas(),
        c.pilot_samples,
        c.saturated
    );
    for (i, row) in c.rows.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        push_complex_list(&mut s, row);
    }
    s.push(']');
    if let Some(t) = &c.truth {
        s.push_str(",\"truth\":{\"h\":");
        push_complex_list(&mut s, &t.h);
        s.push_str(",\"theta\":");
        push_real_list(&mut s, &t.theta);
        s.push_str(",\"clean\":");
        push_complex_list(&mut s, &t.clean);
        s.push_str(",\"x2_power\":");
        push_f64(&mut s, t.x2_power);
        s.push_str(",\"noise_var\":");
        push_f64(&mut s, t.noise_var);
        s.push_str(",\"distortion_power\":");
        push_real_list(&mut s, &t.distortion_power);
        s.push('}');
    }
    s.push('}');
    s
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::Parse(format!("missing field {key:?}")))
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::Parse(format!("{what}: expected a number")))
}

fn as_u64(v: &Value, what: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| Error::Parse(format!("{what}: expected an unsigned integer")))
}

fn as_array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::Parse(format!("{what}: expected an array")))
}

fn complex_list(v: &Value, what: &str) -> Result<Vec<Complex64>> {
    as_array(v, what)?
        .iter()
        .map(|pair| {
            let p = as_array(pair, what)?;
            if p.len() != 2 {
                return Err(Error::Parse(format!("{what}: expected [re, im] pairs")));
            }
            Ok(Complex64::new(as_f64(&p[0], what)?, as_f64(&p[1], what)?))
        })
        .collect()
}

fn real_list(v: &Value, what: &str) -> Result<Vec<f64>> {
    as_array(v, what)?.iter().map(|x| as_f64(x, what)).collect()
}

pub fn capture_from_json(line: &str) -> Result<AntennaCapture> {
    let v: Value = serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))?;
    let snr = field(&v, "snr_db")?;
    let snr_db = if snr.is_null() { f64::INFINITY } else { as_f64(snr, "snr_db")? };
    let rows: Vec<ComplexSequence> = as_array(field(&v, "samples")?, "samples")?
        .iter()
        .map(|r| complex_list(r, "samples").map(ComplexSequence::from))
        .collect::<Result<_>>()?;
    let n = as_u64(field(&v, "n_antennas")?, "n_antennas")? as usize;
    if rows.len() != n {
        return Err(Error::Parse(format!("n_antennas is {n} but {} rows present", rows.len())));
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Parse("sample rows differ in length".into()));
    }
    let truth = match v.get("truth") {
        None | Some(Value::Null) => None,
        Some(t) => Some(CaptureTruth {
            h: complex_list(field(t, "h")?, "truth.h")?,
            theta: real_list(field(t, "theta")?, "truth.theta")?,
            clean: complex_list(field(t, "clean")?, "truth.clean")?.into(),
            x2_power: as_f64(field(t, "x2_power")?, "truth.x2_power")?,
            noise_var: as_f64(field(t, "noise_var")?, "truth.noise_var")?,
            distortion_power: real_list(field(t, "distortion_power")?, "truth.distortion_power")?,
        }),
    };
    Ok(AntennaCapture {
        rows,
        truth,
        frame_index: as_u64(field(&v, "frame_index")?, "frame_index")?,
        emitter: as_u64(field(&v, "emitter_id")?, "emitter_id")? as usize,
        snr_db,
        pilot_samples: v.get("pilot_samples").and_then(Value::as_u64).unwrap_or(0) as usize,
        saturated: v.get("saturated").and_then(Value::as_u64).unwrap_or(0) as usize,
    })
}

pub fn write_captures<W: Write>(mut out: W, captures: &[AntennaCapture]) -> std::io::Result<()> {
    for c in captures {
        writeln!(out, "{}", capture_to_json(c))?;
    }
    Ok(())
}

pub fn read_captures<R: BufRead>(input: R) -> Result<Vec<AntennaCapture>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(capture_from_json(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ctx(frame: u64) -> FrameContext {
        FrameContext {
            streams: FrameStreams { seed: 7, trial: 0, frame },
            emitter: 2,
            pilot_samples: 320,
        }
    }

    fn test_signal(len: usize) -> Vec<Complex64> {
        let mut x: Vec<Complex64> = (0..len)
            .map(|n| Complex64::from_polar(1.0, 0.37 * n as f64) * (1.0 + 0.3 * (0.05 * n as f64).sin()))
            .collect();
        crate::emitter::normalize_power(&mut x).unwrap();
        x
    }

    #[test]
    fn zero_bandwidth_oscillator_is_silent() {
        let s = FrameStreams { seed: 1, trial: 0, frame: 0 }.oscillator(0);
        assert!(phase_noise_path(&s, 0.0, 0.01, 50).unwrap().iter().all(|&t| t == 0.0));
        assert!(phase_noise_path(&s, -0.1, 0.01, 5).is_err());
    }

    #[test]
    fn phase_path_prefix_is_stable() {
        let s = FrameStreams { seed: 3, trial: 4, frame: 0 }.oscillator(1);
        let long = phase_noise_path(&s, 0.1, 0.01, 40).unwrap();
        assert_eq!(sample_phase_noise(&s, 0.1, 0.01, 17).unwrap(), long[17]);
    }

    #[test]
    fn phase_noise_first_frame_variance_and_independence() {
        let chi = 0.01;
        let trials = 100_000;
        let mut a = Vec::with_capacity(trials);
        let mut b = Vec::with_capacity(trials);
        for t in 0..trials as u64 {
            let fs = FrameStreams { seed: 11, trial: t, frame: 0 };
            a.push(sample_phase_noise(&fs.oscillator(0), chi, 0.01, 1).unwrap());
            b.push(sample_phase_noise(&fs.oscillator(1), chi, 0.01, 1).unwrap());
        }
        let var = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        let expect = 2.0 * PI * chi;
        assert!((var(&a) / expect - 1.0).abs() < 0.03, "{}", var(&a) / expect);
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / trials as f64
            / (var(&a) * var(&b)).sqrt();
        assert!(corr.abs() < 0.02, "{corr}");
    }

    #[test]
    fn jitter_identity_and_constant_rotation() {
        let x = test_signal(64);
        let out = apply_jitter(&x, &[0.0; 64], 100.0).unwrap();
        assert_eq!(out.as_slice(), x.as_slice());

        let out = apply_jitter(&x, &[0.003; 64], 100.0).unwrap();
        let rot = Complex64::from_polar(1.0, -2.0 * PI * 0.3);
        for n in 0..63 {
            let interp = x[n] * 0.997 + x[n + 1] * 0.003;
            assert!((out[n] - interp * rot).norm() < 1e-14);
        }
    }

    #[test]
    fn jitter_is_exact_on_a_ramp() {
        let x: Vec<Complex64> = (0..32).map(|n| c(n as f64, 0.0)).collect();
        let out = apply_jitter(&x, &[0.1; 32], 0.0).unwrap();
        for (n, z) in out.iter().enumerate() {
            assert_abs_diff_eq!(z.re, n as f64 + 0.1, epsilon = 1e-12);
        }
        let neg = apply_jitter(&x, &[-0.2; 32], 0.0).unwrap();
        assert_abs_diff_eq!(neg[0].re, -0.2, epsilon = 1e-12);
        assert!(apply_jitter(&x, &[0.5; 32], 0.0).is_err());
    }

    #[test]
    fn quantizer_examples() {
        let q = Quantizer { v: 1.0, eps: 16 };
        let out = quantize(&[c(0.0, 0.0), c(0.4 * 2f64.powi(-15), 0.0)], q).unwrap();
        assert_eq!(out.samples[0], c(0.0, 0.0));
        assert_eq!(out.samples[1], c(0.0, 0.0));
        let out = quantize(&[c(1.7, -3.0)], q).unwrap();
        assert_eq!(out.samples[0], c(1.0, -1.0));
        assert_eq!(out.saturated, 2);
    }

    #[test]
    fn quantizer_error_statistics() {
        let q = Quantizer { v: 1.0, eps: 16 };
        let s = RandomStream::new(5, StreamCoords::new(0, 0, 0, Purpose::Custom(1)));
        let u = s.draw(crate::signal::Distribution::Uniform { low: -1.0, high: 1.0 }, 1_000_000).unwrap();
        let x: Vec<Complex64> = u.iter().map(|&v| c(v, 0.0)).collect();
        let out = quantize(&x, q).unwrap();
        let err: Vec<f64> = out.samples.iter().zip(&u).map(|(y, v)| y.re - v).collect();
        let max = err.iter().fold(0f64, |m, e| m.max(e.abs()));
        assert!(max <= 2f64.powi(-16));
        let var = err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64;
        let expect = 2f64.powi(-32) / 3.0;
        assert!((var / expect - 1.0).abs() < 0.02);
    }

    #[test]
    fn impairment_free_chain_is_transparent() {
        let x = test_signal(1280);
        let cap = receive_frame(&x, &ChannelConfig::new(f64::INFINITY), &ReceiverProfile::ideal(3), &ctx(4)).unwrap();
        assert_eq!(cap.rows.len(), 3);
        for row in &cap.rows {
            assert_eq!(row.as_slice(), x.as_slice());
        }
        let t = cap.truth.unwrap();
        assert_eq!(t.noise_var, 0.0);
        assert!(t.distortion_power.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn noise_variance_matches_snr() {
        let x = test_signal(100_000);
        let rx = ReceiverProfile::ideal(1);
        let cap = receive_frame(&x, &ChannelConfig::new(15.0), &rx, &ctx(0)).unwrap();
        let var = cap.rows[0].iter().zip(&x).map(|(y, x)| (y - x).norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!((var / 10f64.powf(-1.5) - 1.0).abs() < 0.03, "{var}");
        assert_abs_diff_eq!(cap.truth.unwrap().noise_var, 10f64.powf(-1.5), epsilon = 1e-12);
    }

    #[test]
    fn capture_geometry_and_phase_constancy() {
        let x = test_signal(1280);
        let rx = ReceiverProfile {
            quantizer: None,
            jitter: Jitter::Off,
            ..ReceiverProfile::new(4, 0.1)
        };
        let cap = receive_frame(&x, &ChannelConfig::new(f64::INFINITY), &rx, &ctx(9)).unwrap();
        assert_eq!(cap.rows.len(), 4);
        assert!(cap.rows.iter().all(|r| r.len() == 1280));
        let t = cap.truth.as_ref().unwrap();
        for (i, row) in cap.rows.iter().enumerate() {
            let rot = Complex64::from_polar(1.0, -t.theta[i]);
            for (y, x) in row.iter().zip(&x) {
                assert!((y - rot * x).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn quantized_capture_matches_truth_within_half_step() {
        let x = test_signal(1280);
        let rx = ReceiverProfile::new(2, 0.01);
        let cap = receive_frame(&x, &ChannelConfig::new(f64::INFINITY), &rx, &ctx(3)).unwrap();
        let t = cap.truth.as_ref().unwrap();
        let half = rx.quantizer.unwrap().step() / 2.0;
        for (i, row) in cap.rows.iter().enumerate() {
            let g = t.h[i] * Complex64::from_polar(1.0, -t.theta[i]);
            for (y, xh) in row.iter().zip(t.clean.iter()) {
                let e = y - g * xh;
                if (g * xh).re.abs() < 1.0 && (g * xh).im.abs() < 1.0 {
                    assert!(e.re.abs() <= half + 1e-15 && e.im.abs() <= half + 1e-15);
                }
            }
        }
    }

    #[test]
    fn rayleigh_fading_has_unit_power() {
        let x = test_signal(16);
        let rx = ReceiverProfile::ideal(1);
        let ch = ChannelConfig {
            snr_db: f64::INFINITY,
            fading: Fading::Rayleigh,
        };
        let mut p = 0.0;
        let frames = 20_000;
        for k in 0..frames {
            let cap = receive(&x, &ch, &rx, &[0.0], &ctx(k)).unwrap();
            p += cap.truth.unwrap().h[0].norm_sqr();
        }
        assert!((p / frames as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let x = test_signal(40);
        let rx = ReceiverProfile::new(2, 0.3);
        let mut cap = receive_frame(&x, &ChannelConfig::new(12.5), &rx, &ctx(1)).unwrap();
        let line = capture_to_json(&cap);
        assert!(!line.contains('\n'));
        assert_eq!(capture_from_json(&line).unwrap(), cap);
        cap.snr_db = f64::INFINITY;
        cap.truth = None;
        let back = capture_from_json(&capture_to_json(&cap)).unwrap();
        assert_eq!(back, cap);
    }

    #[test]
    fn json_rejects_malformed_records() {
        assert!(capture_from_json("{}").is_err());
        assert!(capture_from_json("not json").is_err());
        let bad = r#"{"emitter_id":0,"frame_index":0,"snr_db":1,"n_antennas":2,"samples":[[[1,0]]]}"#;
        assert!(capture_from_json(bad).is_err());
    }
}
