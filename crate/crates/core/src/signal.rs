//! Shared numeric substrate: complex sample sequences, QPSK framing,
//! coordinate-keyed random streams and moment statistics.

use std::ops::{Deref, DerefMut};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Default number of symbols in one burst.
pub const SYMBOLS_PER_FRAME: usize = 128;
/// Default number of leading pilot symbols.
pub const PILOTS_PER_FRAME: usize = 32;
/// Default samples per symbol (`T_s / T`).
pub const OVERSAMPLING: usize = 10;

/// An ordered run of complex baseband samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexSequence(Vec<Complex64>);

impl ComplexSequence {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self(samples)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    /// True when every sample is finite.
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Mean of `|x|^2`.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.0)
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.im).collect()
    }
}

impl Deref for ComplexSequence {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for ComplexSequence {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

impl From<Vec<Complex64>> for ComplexSequence {
    fn from(samples: Vec<Complex64>) -> Self {
        Self(samples)
    }
}

impl FromIterator<Complex64> for ComplexSequence {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

pub(crate) fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64
}

// ---------------------------------------------------------------------------
// QPSK framing
// ---------------------------------------------------------------------------

/// Gray-mapped QPSK. Bits are consumed in pairs `(b0, b1)`: `b0` selects the
/// sign of the quadrature part and `b1` the sign of the in-phase part, so
/// `00 -> (1+j)/√2`, `01 -> (-1+j)/√2`, `11 -> (-1-j)/√2`, `10 -> (1-j)/√2`.
pub fn map_qpsk(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(invalid!("QPSK mapping needs an even bit count, got {}", bits.len()));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(invalid!("bit values must be 0 or 1, got {b}"));
    }
    let a = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits
        .chunks_exact(2)
        .map(|pair| {
            let q = if pair[0] == 0 { a } else { -a };
            let i = if pair[1] == 0 { a } else { -a };
            Complex64::new(i, q)
        })
        .collect())
}

/// Symbol geometry of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub symbol_count: usize,
    pub pilot_count: usize,
    pub oversampling: usize,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            symbol_count: SYMBOLS_PER_FRAME,
            pilot_count: PILOTS_PER_FRAME,
            oversampling: OVERSAMPLING,
        }
    }
}

impl FrameLayout {
    pub fn data_count(&self) -> usize {
        self.symbol_count - self.pilot_count
    }

    /// Samples per frame, `L`.
    pub fn sample_count(&self) -> usize {
        self.symbol_count * self.oversampling
    }

    /// Samples covered by the pilot symbols.
    pub fn pilot_samples(&self) -> usize {
        self.pilot_count * self.oversampling
    }

    pub fn validate(&self) -> Result<()> {
        if self.symbol_count == 0 {
            return Err(invalid!("frame must hold at least one symbol"));
        }
        if self.pilot_count > self.symbol_count {
            return Err(invalid!(
                "pilot count {} exceeds symbol count {}",
                self.pilot_count,
                self.symbol_count
            ));
        }
        if self.oversampling == 0 {
            return Err(invalid!("oversampling must be positive"));
        }
        Ok(())
    }
}

/// One burst of QPSK symbols, pilots first.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub symbols: Vec<Complex64>,
    pub pilot_mask: Vec<bool>,
    pub pilot_count: usize,
    pub oversampling: usize,
}

impl Frame {
    pub fn symbol_count(&self) -> usize {
        self.symbols.len()
    }

    pub fn layout(&self) -> FrameLayout {
        FrameLayout {
            symbol_count: self.symbols.len(),
            pilot_count: self.pilot_count,
            oversampling: self.oversampling,
        }
    }

    /// Frame with the published pilots and data bits drawn from `stream`.
    pub fn random(layout: FrameLayout, stream: &RandomStream) -> Result<Frame> {
        layout.validate()?;
        let mut rng = stream.rng();
        let data_bits: Vec<u8> = (0..2 * layout.data_count())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        build_frame(layout, &data_bits, &published_pilot_bits(layout.pilot_count))
    }
}

/// Assembles a frame: pilot symbols occupy the first `pilot_count` slots.
pub fn build_frame(layout: FrameLayout, data_bits: &[u8], pilot_bits: &[u8]) -> Result<Frame> {
    layout.validate()?;
    if pilot_bits.len() != 2 * layout.pilot_count {
        return Err(invalid!(
            "expected {} pilot bits, got {}",
            2 * layout.pilot_count,
            pilot_bits.len()
        ));
    }
    if data_bits.len() != 2 * layout.data_count() {
        return Err(invalid!(
            "expected {} data bits, got {}",
            2 * layout.data_count(),
            data_bits.len()
        ));
    }
    let mut symbols = map_qpsk(pilot_bits)?;
    symbols.extend(map_qpsk(data_bits)?);
    let pilot_mask = (0..layout.symbol_count)
        .map(|i| i < layout.pilot_count)
        .collect();
    Ok(Frame {
        symbols,
        pilot_mask,
        pilot_count: layout.pilot_count,
        oversampling: layout.oversampling,
    })
}

/// The pilot bit sequence shared by every transmitter and the receiver.
pub fn published_pilot_bits(pilot_count: usize) -> Vec<u8> {
    let mut rng = RandomStream::new(0, StreamCoords::new(0, 0, 0, Purpose::Pilot)).rng();
    (0..2 * pilot_count).map(|_| rng.random_range(0..2u8)).collect()
}

/// The published pilot symbols.
pub fn published_pilots(pilot_count: usize) -> Vec<Complex64> {
    map_qpsk(&published_pilot_bits(pilot_count)).expect("pilot bit count is even")
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

/// Population moments of a complex sequence.
///
/// Skewness and kurtosis are evaluated per real channel and averaged over
/// the channels that have non-zero variance. Kurtosis is non-excess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub mean: Complex64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Population moments of a real sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl RealMoments {
    /// Whether the variance is indistinguishable from rounding noise.
    fn degenerate(variance: f64, scale: f64) -> bool {
        variance <= (1e-14 * scale).powi(2)
    }
}

pub fn real_moments(x: &[f64]) -> Result<RealMoments> {
    if x.is_empty() {
        return Err(invalid!("moments of an empty sequence"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let scale = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if RealMoments::degenerate(m2, scale) {
        return Ok(RealMoments {
            mean,
            variance: m2,
            skewness: 0.0,
            kurtosis: 0.0,
        });
    }
    Ok(RealMoments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
    })
}

pub fn moments(seq: &[Complex64]) -> Result<MomentSummary> {
    if seq.is_empty() {
        return Err(invalid!("moments of an empty sequence"));
    }
    let re: Vec<f64> = seq.iter().map(|z| z.re).collect();
    let im: Vec<f64> = seq.iter().map(|z| z.im).collect();
    let mr = real_moments(&re)?;
    let mi = real_moments(&im)?;
    let active: Vec<&RealMoments> = [&mr, &mi]
        .into_iter()
        // non-degenerate channels always have kurtosis >= 1
        .filter(|m| m.kurtosis > 0.0)
        .collect();
    let (skewness, kurtosis) = if active.is_empty() {
        (0.0, 0.0)
    } else {
        let k = active.len() as f64;
        (
            active.iter().map(|m| m.skewness).sum::<f64>() / k,
            active.iter().map(|m| m.kurtosis).sum::<f64>() / k,
        )
    };
    Ok(MomentSummary {
        mean: Complex64::new(mr.mean, mi.mean),
        variance: mr.variance + mi.variance,
        skewness,
        kurtosis,
    })
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// What a random stream is used for; part of its coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Purpose {
    Pilot,
    Data,
    PhaseNoise,
    Jitter,
    Noise,
    Fading,
    LabelShuffle,
    /// Free-form tag for tests and ad hoc experiments.
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Pilot => 1,
            Purpose::Data => 2,
            Purpose::PhaseNoise => 3,
            Purpose::Jitter => 4,
            Purpose::Noise => 5,
            Purpose::Fading => 6,
            Purpose::LabelShuffle => 7,
            Purpose::Custom(t) => 0x1000_0000_0000_0000 | t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamCoords {
    pub trial: u64,
    pub frame: u64,
    pub antenna: u64,
    pub purpose: Purpose,
}

impl StreamCoords {
    pub fn new(trial: u64, frame: u64, antenna: u64, purpose: Purpose) -> Self {
        Self {
            trial,
            frame,
            antenna,
            purpose,
        }
    }
}

/// A reproducible random stream addressed by `(seed, coordinates)`.
///
/// The ChaCha key is the SHA-256 of the seed and coordinates, so every
/// stream can be recreated independently of evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    pub seed: u64,
    pub coords: StreamCoords,
}

/// Distributions accepted by [`RandomStream::draw`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Gaussian { mean: f64, variance: f64 },
    Uniform { low: f64, high: f64 },
}

impl RandomStream {
    pub fn new(seed: u64, coords: StreamCoords) -> Self {
        Self { seed, coords }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut h = Sha256::new();
        h.update(b"rffid-stream-v1");
        h.update(self.seed.to_le_bytes());
        h.update(self.coords.trial.to_le_bytes());
        h.update(self.coords.frame.to_le_bytes());
        h.update(self.coords.antenna.to_le_bytes());
        h.update(self.coords.purpose.tag().to_le_bytes());
        ChaCha12Rng::from_seed(h.finalize().into())
    }

    pub fn draw(&self, dist: Distribution, count: usize) -> Result<Vec<f64>> {
        let mut rng = self.rng();
        match dist {
            Distribution::Gaussian { mean, variance } => {
                if !(variance >= 0.0) {
                    return Err(invalid!("gaussian variance must be non-negative, got {variance}"));
                }
                let sd = variance.sqrt();
                Ok((0..count)
                    .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect())
            }
            Distribution::Uniform { low, high } => {
                if !(low <= high) {
                    return Err(invalid!("uniform bounds out of order: [{low}, {high}]"));
                }
                Ok((0..count)
                    .map(|_| low + (high - low) * rng.random::<f64>())
                    .collect())
            }
        }
    }
}

/// Circularly-symmetric complex gaussian with `E|z|^2 = variance`.
pub(crate) fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}
