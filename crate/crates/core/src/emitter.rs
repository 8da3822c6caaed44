//! Transmit-side hardware distortions: the source of the fingerprint.
//!
//! A frame travels through four stages, each with its own per-device
//! imperfection:
//!
//! 1. pulse shaping with a root-raised-cosine filter whose frequency response
//!    carries an amplitude ripple `ρ₀ + ρ₁·cos(2πf/T_A)` and a phase error
//!    `2πq₀f + q₁·sin(2πf/T_Φ)`,
//! 2. an I/Q modulator with gain mismatch `G` and quadrature error `ζ`,
//! 3. additive spurious tones (a tone at zero offset is carrier leakage),
//! 4. a memoryless odd-order Taylor power amplifier.
//!
//! Everything is complex baseband; frequencies are in units of the symbol
//! rate. The final waveform is scaled to unit mean power.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::signal::{ComplexSequence, Frame};

/// Default root-raised-cosine rolloff.
pub const DEFAULT_ROLLOFF: f64 = 0.35;
/// Default filter span in symbols.
pub const DEFAULT_SPAN: usize = 8;

/// One additive tone `c·e^{j2π f n T}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpuriousTone {
    pub amplitude: Complex64,
    /// Frequency offset in units of the symbol rate.
    pub offset: f64,
}

/// Per-device distortion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterProfile {
    pub name: String,
    /// ρ₀
    pub amp_offset: f64,
    /// ρ₁
    pub amp_ripple: f64,
    /// T_A
    pub amp_period: f64,
    /// q₀
    pub phase_slope: f64,
    /// q₁
    pub phase_ripple: f64,
    /// T_Φ
    pub phase_period: f64,
    /// G = G_I / G_Q
    pub iq_gain_ratio: f64,
    /// ζ in radians.
    pub quadrature_error: f64,
    pub tones: Vec<SpuriousTone>,
    /// Taylor coefficients of orders 1, 3, 5, ...
    pub taylor: Vec<f64>,
}

const BUILTIN: [(&str, &str); 5] = [
    ("T1", include_str!("../profiles/T1.profile")),
    ("T2", include_str!("../profiles/T2.profile")),
    ("T3", include_str!("../profiles/T3.profile")),
    ("T4", include_str!("../profiles/T4.profile")),
    ("T5", include_str!("../profiles/T5.profile")),
];

impl EmitterProfile {
    /// A device with every distortion switched off.
    pub fn ideal() -> Self {
        Self {
            name: "ideal".into(),
            amp_offset: 1.0,
            amp_ripple: 0.0,
            amp_period: 4.0,
            phase_slope: 0.0,
            phase_ripple: 0.0,
            phase_period: 4.0,
            iq_gain_ratio: 1.0,
            quadrature_error: 0.0,
            tones: Vec::new(),
            taylor: vec![1.0],
        }
    }

    /// One of the five bundled reference emitters, `"T1"` to `"T5"`.
    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("no bundled emitter profile named {name:?}")))?;
        Self::parse(text)
    }

    /// All five bundled reference emitters in order.
    pub fn reference_set() -> Vec<Self> {
        BUILTIN
            .iter()
            .map(|(_, text)| Self::parse(text).expect("bundled profiles parse"))
            .collect()
    }

    /// `A_Υ(f)`
    pub fn amplitude_response(&self, f: f64) -> f64 {
        self.amp_offset + self.amp_ripple * (2.0 * PI * f / self.amp_period).cos()
    }

    /// `Φ_Υ(f)`
    pub fn phase_response(&self, f: f64) -> f64 {
        2.0 * PI * self.phase_slope * f
            + self.phase_ripple * (2.0 * PI * f / self.phase_period).sin()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProfile(format!("{}: {msg}", self.name)));
        if !(self.amp_offset > 0.0) {
            return bad(format!("rho0 must be positive, got {}", self.amp_offset));
        }
        if !(self.iq_gain_ratio > 0.0) {
            return bad(format!("G must be positive, got {}", self.iq_gain_ratio));
        }
        if !(self.quadrature_error.abs() < PI / 2.0) {
            return bad(format!("|zeta| must be below 90°, got {} rad", self.quadrature_error));
        }
        if self.amp_period == 0.0 || self.phase_period == 0.0 {
            return bad("T_A and T_Phi must be non-zero".into());
        }
        if self.taylor.is_empty() {
            return bad("at least the linear Taylor coefficient b1 is required".into());
        }
        let finite = [
            self.amp_ripple,
            self.phase_slope,
            self.phase_ripple,
            self.amp_period,
            self.phase_period,
        ]
        .iter()
        .chain(self.taylor.iter())
        .all(|v| v.is_finite())
            && self.tones.iter().all(|t| {
                t.offset.is_finite() && t.amplitude.re.is_finite() && t.amplitude.im.is_finite()
            });
        if !finite {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    /// Parses the flat `key = value` profile format.
    ///
    /// Recognised keys: `name`, `rho0`, `rho1`, `T_A`, `q0`, `q1`, `T_Phi`,
    /// `G`, `zeta_deg`, `c<i>_re`, `c<i>_im`, `f_zeta<i>` and `b<k>` for odd
    /// `k`. Lines starting with `#` are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidProfile(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let k = k.trim().to_string();
            if values.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::InvalidProfile(format!("duplicate key {k:?}")));
            }
        }

        let num = |key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidProfile(format!("key {key:?}: not a number: {v:?}")))
        };

        let mut profile = EmitterProfile {
            name: values.get("name").cloned().unwrap_or_else(|| "unnamed".into()),
            ..EmitterProfile::ideal()
        };
        let mut tones: BTreeMap<usize, (Option<f64>, Option<f64>, Option<f64>)> = BTreeMap::new();
        let mut taylor: BTreeMap<usize, f64> = BTreeMap::new();
        let mut seen_required = 0;

        for (key, v) in &values {
            match key.as_str() {
                "name" => {}
                "rho0" => profile.amp_offset = num(key, v)?,
                "rho1" => profile.amp_ripple = num(key, v)?,
                "T_A" => profile.amp_period = num(key, v)?,
                "q0" => profile.phase_slope = num(key, v)?,
                "q1" => profile.phase_ripple = num(key, v)?,
                "T_Phi" => profile.phase_period = num(key, v)?,
                "G" => profile.iq_gain_ratio = num(key, v)?,
                "zeta_deg" => profile.quadrature_error = num(key, v)?.to_radians(),
                k => {
                    if let Some(idx) = k.strip_prefix("f_zeta").and_then(|s| s.parse().ok()) {
                        tones.entry(idx).or_default().2 = Some(num(key, v)?);
                        continue;
                    }
                    if let Some(rest) = k.strip_prefix('c') {
                        if let Some((idx, part)) = rest.split_once('_') {
                            if let Ok(idx) = idx.parse::<usize>() {
                                let entry = tones.entry(idx).or_default();
                                match part {
                                    "re" => entry.0 = Some(num(key, v)?),
                                    "im" => entry.1 = Some(num(key, v)?),
                                    _ => return Err(unknown_key(k)),
                                }
                                continue;
                            }
                        }
                    }
                    if let Some(order) = k.strip_prefix('b').and_then(|s| s.parse::<usize>().ok()) {
                        if order % 2 == 0 {
                            return Err(Error::InvalidProfile(format!(
                                "Taylor coefficient {k:?} must have odd order"
                            )));
                        }
                        taylor.insert(order, num(key, v)?);
                        continue;
                    }
                    return Err(unknown_key(k));
                }
            }
            if key != "name" {
                seen_required += 1;
            }
        }
        if seen_required != 8 {
            let missing: Vec<&str> = ["rho0", "rho1", "T_A", "q0", "q1", "T_Phi", "G", "zeta_deg"]
                .into_iter()
                .filter(|k| !values.contains_key(*k))
                .collect();
            return Err(Error::InvalidProfile(format!("missing keys: {}", missing.join(", "))));
        }
        if !taylor.contains_key(&1) {
            return Err(Error::InvalidProfile("missing key: b1".into()));
        }

        let max_order = *taylor.keys().max().unwrap();
        profile.taylor = (0..=max_order / 2)
            .map(|i| taylor.get(&(2 * i + 1)).copied().unwrap_or(0.0))
            .collect();
        profile.tones = tones
            .into_iter()
            .map(|(idx, (re, im, f))| {
                let offset = f.ok_or_else(|| {
                    Error::InvalidProfile(format!("tone {idx} has an amplitude but no f_zeta{idx}"))
                })?;
                if re.is_none() && im.is_none() {
                    return Err(Error::InvalidProfile(format!(
                        "tone {idx} has f_zeta{idx} but no amplitude"
                    )));
                }
                Ok(SpuriousTone {
                    amplitude: Complex64::new(re.unwrap_or(0.0), im.unwrap_or(0.0)),
                    offset,
                })
            })
            .collect::<Result<_>>()?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidProfile(msg) => {
                Error::InvalidProfile(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// Renders the profile in the format read by [`EmitterProfile::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "rho0 = {}", self.amp_offset);
        let _ = writeln!(s, "rho1 = {}", self.amp_ripple);
        let _ = writeln!(s, "T_A = {}", self.amp_period);
        let _ = writeln!(s, "q0 = {}", self.phase_slope);
        let _ = writeln!(s, "q1 = {}", self.phase_ripple);
        let _ = writeln!(s, "T_Phi = {}", self.phase_period);
        let _ = writeln!(s, "G = {}", self.iq_gain_ratio);
        let _ = writeln!(s, "zeta_deg = {}", self.quadrature_error.to_degrees());
        for (i, t) in self.tones.iter().enumerate() {
            let _ = writeln!(s, "c{}_re = {}", i + 1, t.amplitude.re);
            let _ = writeln!(s, "c{}_im = {}", i + 1, t.amplitude.im);
            let _ = writeln!(s, "f_zeta{} = {}", i + 1, t.offset);
        }
        for (i, b) in self.taylor.iter().enumerate() {
            let _ = writeln!(s, "b{} = {}", 2 * i + 1, b);
        }
        s
    }
}

fn unknown_key(k: &str) -> Error {
    Error::InvalidProfile(format!("unknown key {k:?}"))
}

// ---------------------------------------------------------------------------
// Shaping filter
// ---------------------------------------------------------------------------

/// Distorted pulse-shaping filter sampled at the oversampled rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingFilter {
    /// `span * oversampling + 1` complex taps with unit energy.
    pub taps: ComplexSequence,
    pub span: usize,
    pub rolloff: f64,
    pub oversampling: usize,
    /// Tap index aligned with a symbol instant when shaping.
    pub delay: usize,
}

/// Ideal root-raised-cosine taps with unit energy.
pub fn root_raised_cosine(oversampling: usize, span: usize, rolloff: f64) -> Vec<f64> {
    let len = span * oversampling + 1;
    let center = (span * oversampling / 2) as f64;
    let b = rolloff;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let t = (n as f64 - center) / oversampling as f64;
            if t.abs() < 1e-12 {
                1.0 - b + 4.0 * b / PI
            } else if (4.0 * b * t.abs() - 1.0).abs() < 1e-9 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let energy = taps.iter().map(|v| v * v).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|v| *v /= energy);
    taps
}

/// Root-raised-cosine filter with the profile's frequency-domain distortion
/// applied on the DFT grid of the tap window.
///
/// The bulk delay `q₀` is a circular shift of the window; it is undone by
/// [`ShapingFilter::delay`] so that shaped symbols stay on the sample grid.
pub fn build_shaping_filter(
    profile: &EmitterProfile,
    oversampling: usize,
    span: usize,
    rolloff: f64,
) -> Result<ShapingFilter> {
    if span < 4 {
        return Err(invalid!("filter span must be at least 4 symbols, got {span}"));
    }
    if oversampling < 2 {
        return Err(invalid!("oversampling must be at least 2, got {oversampling}"));
    }
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(invalid!("rolloff must lie in (0, 1], got {rolloff}"));
    }
    if !(profile.amp_offset > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "{}: rho0 must be positive, got {}",
            profile.name, profile.amp_offset
        )));
    }

    let ideal = root_raised_cosine(oversampling, span, rolloff);
    let len = ideal.len();
    let mut spectrum: Vec<Complex64> = ideal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut spectrum);
    for (k, bin) in spectrum.iter_mut().enumerate() {
        let signed = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
        let f = signed * oversampling as f64 / len as f64;
        *bin *= Complex64::from_polar(profile.amplitude_response(f), profile.phase_response(f));
    }
    planner.plan_fft_inverse(len).process(&mut spectrum);
    let energy = spectrum.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    spectrum.iter_mut().for_each(|z| *z /= energy);

    let center = (span * oversampling / 2) as i64;
    let bulk = (profile.phase_slope * oversampling as f64).round() as i64;
    let delay = (center - bulk).rem_euclid(len as i64) as usize;

    Ok(ShapingFilter {
        taps: spectrum.into(),
        span,
        rolloff,
        oversampling,
        delay,
    })
}

/// Convolves the zero-stuffed symbol train with the filter taps.
///
/// Output sample `n·T_s/T` is aligned with symbol `n`; the result has
/// `symbol_count * oversampling` samples and the edges are zero padded.
pub fn shape_symbols(frame: &Frame, filter: &ShapingFilter) -> Result<ComplexSequence> {
    if frame.oversampling != filter.oversampling {
        return Err(invalid!(
            "frame oversampling {} does not match filter oversampling {}",
            frame.oversampling,
            filter.oversampling
        ));
    }
    let os = frame.oversampling as i64;
    let len = frame.symbols.len() * frame.oversampling;
    let taps = filter.taps.as_slice();
    let delay = filter.delay as i64;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (m, &sym) in frame.symbols.iter().enumerate() {
        if sym == Complex64::new(0.0, 0.0) {
            continue;
        }
        // out[n] += sym * taps[n - m*os + delay]
        let offset = m as i64 * os - delay;
        let lo = offset.max(0);
        let hi = (offset + taps.len() as i64).min(len as i64);
        for n in lo..hi {
            out[n as usize] += sym * taps[(n - offset) as usize];
        }
    }
    Ok(out.into())
}

// ---------------------------------------------------------------------------
// I/Q, tones, PA
// ---------------------------------------------------------------------------

/// Baseband image coefficients `(α, β)` of an I/Q modulator.
pub fn iq_coefficients(gain_ratio: f64, quadrature_error: f64) -> (Complex64, Complex64) {
    let (s, c) = (quadrature_error / 2.0).sin_cos();
    let g = gain_ratio;
    let alpha = Complex64::new(0.5 * (g + 1.0) * c, 0.5 * (g - 1.0) * s);
    let beta = Complex64::new(0.5 * (g - 1.0) * c, 0.5 * (g + 1.0) * s);
    (alpha, beta)
}

/// `α·s + β·s*`
pub fn apply_iq_imbalance(s: &[Complex64], gain_ratio: f64, quadrature_error: f64) -> ComplexSequence {
    let (alpha, beta) = iq_coefficients(gain_ratio, quadrature_error);
    s.iter().map(|&z| alpha * z + beta * z.conj()).collect()
}

/// Adds `Σ c_i e^{j2π f_i n / sample_rate}`; `sample_rate` is in the same
/// units as the tone offsets (samples per symbol when offsets are in units
/// of the symbol rate).
pub fn add_spurious_tones(
    x: &[Complex64],
    tones: &[SpuriousTone],
    sample_rate: f64,
) -> ComplexSequence {
    let mut out = x.to_vec();
    for tone in tones {
        let step = 2.0 * PI * tone.offset / sample_rate;
        for (n, z) in out.iter_mut().enumerate() {
            *z += tone.amplitude * Complex64::from_polar(1.0, step * n as f64);
        }
    }
    out.into()
}

/// Which algebraic form the Taylor amplifier uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PaForm {
    /// `Σ b_i · x|x|^{2i}`, the memoryless envelope model.
    #[default]
    Baseband,
    /// `Σ b_i · x^{2i+1}` evaluated on the complex sample.
    LiteralPower,
}

pub fn apply_pa_nonlinearity(x: &[Complex64], taylor: &[f64], form: PaForm) -> Result<ComplexSequence> {
    if taylor.is_empty() {
        return Err(invalid!("PA model needs at least one Taylor coefficient"));
    }
    Ok(x.iter()
        .map(|&z| match form {
            PaForm::Baseband => {
                let p = z.norm_sqr();
                // Horner in |x|^2
                let gain = taylor.iter().rev().fold(0.0, |acc, &b| acc * p + b);
                z * gain
            }
            PaForm::LiteralPower => {
                let z2 = z * z;
                let poly = taylor
                    .iter()
                    .rev()
                    .fold(Complex64::new(0.0, 0.0), |acc, &b| acc * z2 + b);
                z * poly
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Full chain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterConfig {
    pub oversampling: usize,
    pub span: usize,
    pub rolloff: f64,
    pub pa_form: PaForm,
}

impl Default for EmitterConfig {
    fn default() -> Self {
        Self {
            oversampling: crate::signal::OVERSAMPLING,
            span: DEFAULT_SPAN,
            rolloff: DEFAULT_ROLLOFF,
            pa_form: PaForm::Baseband,
        }
    }
}

/// A device with its shaping filter precomputed.
#[derive(Debug, Clone)]
pub struct Emitter {
    pub profile: EmitterProfile,
    pub filter: ShapingFilter,
    pub config: EmitterConfig,
}

impl Emitter {
    pub fn new(profile: EmitterProfile, config: EmitterConfig) -> Result<Self> {
        profile.validate()?;
        let filter = build_shaping_filter(&profile, config.oversampling, config.span, config.rolloff)?;
        Ok(Self {
            profile,
            filter,
            config,
        })
    }

    /// Runs the full distortion chain and scales to unit mean power.
    pub fn emit(&self, frame: &Frame) -> Result<ComplexSequence> {
        let p = &self.profile;
        let shaped = shape_symbols(frame, &self.filter)?;
        let iq = apply_iq_imbalance(&shaped, p.iq_gain_ratio, p.quadrature_error);
        let toned = add_spurious_tones(&iq, &p.tones, frame.oversampling as f64);
        let mut out = apply_pa_nonlinearity(&toned, &p.taylor, self.config.pa_form)?;
        normalize_power(&mut out)?;
        Ok(out)
    }
}

/// Convenience wrapper that builds the filter on every call.
pub fn emit(profile: &EmitterProfile, frame: &Frame, config: EmitterConfig) -> Result<ComplexSequence> {
    Emitter::new(profile.clone(), config)?.emit(frame)
}

pub(crate) fn normalize_power(x: &mut [Complex64]) -> Result<()> {
    let power = crate::signal::mean_power(x);
    if !(power > 0.0) || !power.is_finite() {
        return Err(invalid!("cannot normalize a waveform with power {power}"));
    }
    let scale = power.sqrt().recip();
    x.iter_mut().for_each(|z| *z *= scale);
    Ok(())
}
