//! Multi-antenna identification schemes: per-antenna voting (ORS, UWS,
//! MIWS), cross-antenna distortion filtering (DFS) and its grouped variant
//! (GDFWS).

use std::ops::Range;
use std::str::FromStr;

use num_complex::Complex64;

use crate::classifier::{argmax, predict, TrainedModel};
use crate::error::{invalid, Error, Result};
use crate::features::{FeatureExtractor, PilotReference};
use crate::frontend::AntennaCapture;
use crate::signal::ComplexSequence;

/// Lower clamp on the mutual-information deficit, in nats.
pub const DELTA_FLOOR: f64 = 1e-9;
/// Magnitude below which a DFS row or normaliser is treated as zero.
pub const DEGENERATE_MAGNITUDE: f64 = 1e-12;
const VARIANCE_FLOOR: f64 = 1e-12;

/// `ΔI = ½ ln(σ_y² / (σ_w² + σ_x² σ_h²))`, clamped at [`DELTA_FLOOR`].
pub fn delta_mi(var_y: f64, var_w: f64, var_x2: f64, var_h: f64) -> Result<f64> {
    for (name, v) in [("var_y", var_y), ("var_w", var_w), ("var_x2", var_x2), ("var_h", var_h)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid!("{name} must be positive and finite, got {v}"));
        }
    }
    let raw = 0.5 * (var_y / (var_w + var_x2 * var_h)).ln();
    Ok(raw.max(DELTA_FLOOR))
}

/// Per-antenna deficits and the voting weights derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct MiwsWeights {
    pub delta_i: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Weights proportional to `1/ΔI`, normalised to sum to one.
pub fn miws_weights(delta: &[f64]) -> Result<MiwsWeights> {
    if delta.is_empty() {
        return Err(invalid!("no deficits to weight"));
    }
    let delta_i: Vec<f64> = delta
        .iter()
        .map(|&d| {
            if d.is_nan() {
                Err(invalid!("deficit is NaN"))
            } else {
                Ok(d.max(DELTA_FLOOR))
            }
        })
        .collect::<Result<_>>()?;
    let inv: Vec<f64> = delta_i.iter().map(|d| d.recip()).collect();
    let total: f64 = inv.iter().sum();
    let omega = inv.iter().map(|v| v / total).collect();
    Ok(MiwsWeights { delta_i, omega })
}

/// Where the variances feeding `ΔI` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiMode {
    /// Read from the simulation ground truth.
    Oracle,
    /// Estimated from the pilot region against the known pilot waveform.
    Pilot,
}

impl MiMode {
    pub fn name(self) -> &'static str {
        match self {
            MiMode::Oracle => "oracle",
            MiMode::Pilot => "pilot",
        }
    }
}

impl FromStr for MiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(MiMode::Oracle),
            "pilot" => Ok(MiMode::Pilot),
            other => Err(Error::Config(format!("unknown mi_mode {other:?} (expected oracle or pilot)"))),
        }
    }
}

/// The four variances of one antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub var_y: f64,
    pub var_w: f64,
    pub var_x2: f64,
    pub var_h: f64,
}

impl VarianceEstimate {
    pub fn delta_mi(&self) -> Result<f64> {
        delta_mi(self.var_y, self.var_w, self.var_x2, self.var_h)
    }
}

/// Per-antenna variances for `ΔI`.
///
/// Oracle mode: `σ_x²` and `σ_w²` are the recorded truth, `σ_h² = |h_i|²`
/// and `σ_y² = σ_x²σ_h² + σ_w² + P_d`, where `P_d` is the measured power of
/// everything the receiver added besides fading and noise.
///
/// Pilot mode: `σ_y²` is the sample variance of the row, `σ_x²` the power of
/// the pilot waveform `p` over its region, `σ_h² = |⟨y, p⟩|²/‖p‖⁴` and
/// `σ_w² = σ_y² − σ_x²σ_h²`.
pub fn estimate_variances(
    capture: &AntennaCapture,
    mode: MiMode,
    reference: &PilotReference,
) -> Result<Vec<VarianceEstimate>> {
    match mode {
        MiMode::Oracle => {
            let truth = capture
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("oracle mi_mode needs captures with ground truth".into()))?;
            if truth.h.len() != capture.n_antennas() || truth.distortion_power.len() != capture.n_antennas() {
                return Err(invalid!("ground truth does not cover every antenna"));
            }
            let var_x2 = truth.x2_power.max(VARIANCE_FLOOR);
            let var_w = truth.noise_var.max(VARIANCE_FLOOR);
            Ok(truth
                .h
                .iter()
                .zip(&truth.distortion_power)
                .map(|(h, d)| {
                    let var_h = h.norm_sqr().max(VARIANCE_FLOOR);
                    VarianceEstimate {
                        var_y: var_x2 * var_h + var_w + d,
                        var_w,
                        var_x2,
                        var_h,
                    }
                })
                .collect())
        }
        MiMode::Pilot => capture.rows.iter().map(|row| pilot_variances(row, reference)).collect(),
    }
}

fn pilot_variances(row: &[Complex64], reference: &PilotReference) -> Result<VarianceEstimate> {
    let p = &reference.waveform;
    if row.len() < p.len() || p.is_empty() {
        return Err(invalid!(
            "row of {} samples is shorter than the pilot waveform ({})",
            row.len(),
            p.len()
        ));
    }
    let mean = row.iter().sum::<Complex64>() / row.len() as f64;
    let var_y = row.iter().map(|y| (y - mean).norm_sqr()).sum::<f64>() / row.len() as f64;
    let energy: f64 = p.iter().map(|z| z.norm_sqr()).sum();
    let corr: Complex64 = row.iter().zip(p.iter()).map(|(y, q)| y * q.conj()).sum();
    let var_h = corr.norm_sqr() / (energy * energy);
    let var_x2 = energy / p.len() as f64;
    Ok(VarianceEstimate {
        var_y: var_y.max(VARIANCE_FLOOR),
        var_w: (var_y - var_x2 * var_h).max(VARIANCE_FLOOR),
        var_x2: var_x2.max(VARIANCE_FLOOR),
        var_h: var_h.max(VARIANCE_FLOOR),
    })
}

/// Result of a (weighted) hard vote.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    pub label: usize,
    /// Accumulated weight per class index.
    pub tally: Vec<f64>,
    /// `(label, weight)` of each voting unit, in unit order.
    pub contributors: Vec<(usize, f64)>,
}

pub fn weighted_vote(labels: &[usize], weights: &[f64]) -> Result<VoteOutcome> {
    if labels.len() != weights.len() {
        return Err(invalid!("{} labels but {} weights", labels.len(), weights.len()));
    }
    if labels.is_empty() {
        return Err(invalid!("nothing to vote on"));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(invalid!("vote weight {w} is not a finite non-negative number"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut tally = vec![0.0; classes];
    for (&l, &w) in labels.iter().zip(weights) {
        tally[l] += w;
    }
    Ok(VoteOutcome {
        label: argmax(&tally),
        tally,
        contributors: labels.iter().copied().zip(weights.iter().copied()).collect(),
    })
}

/// How DFS estimates the ratio `φ_l/φ_j` between two antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioMode {
    /// Ratio of row means.
    Mean,
    /// Normalised cross-correlation of whole rows.
    Xcorr,
}

impl RatioMode {
    pub fn name(self) -> &'static str {
        match self {
            RatioMode::Mean => "mean",
            RatioMode::Xcorr => "xcorr",
        }
    }
}

impl FromStr for RatioMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(RatioMode::Mean),
            "xcorr" => Ok(RatioMode::Xcorr),
            other => Err(Error::Config(format!("unknown ratio_mode {other:?} (expected mean or xcorr)"))),
        }
    }
}

/// Output of the distortion filter.
#[derive(Debug, Clone, PartialEq)]
pub struct DfsRecovery {
    /// Recovered waveform, normalised so that `x_tilde[0] == 1`.
    pub x_tilde: ComplexSequence,
    /// Estimated `φ_l/φ_0` for every row `l`.
    pub phi_ratios: Vec<Complex64>,
    /// `true` where a row's first filtered sample was too small and the row
    /// was left out of the final average.
    pub condition_flags: Vec<bool>,
    /// Ratio estimator actually used.
    pub mode: RatioMode,
}

/// Recovers the antenna-independent waveform from the capture matrix.
///
/// Every row is `y_l ≈ φ_l x̂ + noise`. For each `l` the rows are rescaled to
/// row `l`'s gain using the ratio estimates and averaged column-wise, giving
/// `Ξ_l ≈ φ_l x̂`; each `Ξ_l` is divided by its first sample and the results
/// are averaged.
pub fn dfs_recover(capture: &AntennaCapture, mode: RatioMode) -> Result<DfsRecovery> {
    dfs_recover_rows(&capture.rows, mode)
}

/// [`dfs_recover`] in `mode`, retrying with [`RatioMode::Xcorr`] when a row
/// mean is degenerate.
pub fn dfs_recover_auto(capture: &AntennaCapture, mode: RatioMode) -> Result<DfsRecovery> {
    match dfs_recover_rows(&capture.rows, mode) {
        Err(Error::DegenerateRow { .. }) if mode == RatioMode::Mean => dfs_recover_rows(&capture.rows, RatioMode::Xcorr),
        other => other,
    }
}

pub fn dfs_recover_rows(rows: &[ComplexSequence], mode: RatioMode) -> Result<DfsRecovery> {
    let n = rows.len();
    if n < 2 {
        return Err(invalid!("distortion filtering needs at least 2 antennas, got {n}"));
    }
    let len = rows[0].len();
    if len < 2 {
        return Err(invalid!("distortion filtering needs at least 2 samples per row"));
    }
    if let Some(r) = rows.iter().position(|r| r.len() != len) {
        return Err(invalid!("row {r} has {} samples, row 0 has {len}", rows[r].len()));
    }
    match mode {
        RatioMode::Mean => dfs_mean(rows),
        RatioMode::Xcorr => dfs_xcorr(rows),
    }
}

fn dfs_mean(rows: &[ComplexSequence]) -> Result<DfsRecovery> {
    let n = rows.len();
    let len = rows[0].len();
    let means: Vec<Complex64> = rows.iter().map(|r| r.iter().sum::<Complex64>() / len as f64).collect();
    for (row, m) in means.iter().enumerate() {
        if m.norm() < DEGENERATE_MAGNITUDE {
            return Err(Error::DegenerateRow { row, magnitude: m.norm() });
        }
    }
    // Ξ_l = (1/N) Σ_j (m_l/m_j) y_j = m_l · s with s = (1/N) Σ_j y_j/m_j.
    let mut s = vec![Complex64::new(0.0, 0.0); len];
    for (r, m) in rows.iter().zip(&means) {
        let inv = m.inv() / n as f64;
        for (acc, y) in s.iter_mut().zip(r.iter()) {
            *acc += y * inv;
        }
    }
    let phi_ratios = means.iter().map(|m| m / means[0]).collect();
    let firsts: Vec<Complex64> = means.iter().map(|m| m * s[0]).collect();
    let x_tilde = average_normalised(&firsts, |l, out| {
        for (o, v) in out.iter_mut().zip(&s) {
            *o += means[l] * v;
        }
    }, len)?;
    Ok(DfsRecovery {
        x_tilde: x_tilde.0,
        phi_ratios,
        condition_flags: x_tilde.1,
        mode: RatioMode::Mean,
    })
}

fn dfs_xcorr(rows: &[ComplexSequence]) -> Result<DfsRecovery> {
    let n = rows.len();
    let len = rows[0].len();
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for l in 0..n {
        for j in l..n {
            let g: Complex64 = rows[l].iter().zip(rows[j].iter()).map(|(a, b)| a * b.conj()).sum();
            gram[l * n + j] = g;
            gram[j * n + l] = g.conj();
        }
    }
    for j in 0..n {
        let e = gram[j * n + j].re;
        if e.sqrt() < DEGENERATE_MAGNITUDE {
            return Err(Error::DegenerateRow { row: j, magnitude: e.sqrt() });
        }
    }
    // ratio[l][j] = ⟨y_l, y_j⟩ / ‖y_j‖² ≈ φ_l/φ_j.
    let ratio = |l: usize, j: usize| gram[l * n + j] / gram[j * n + j].re;
    let phi_ratios = (0..n).map(|l| ratio(l, 0)).collect();
    let firsts: Vec<Complex64> = (0..n)
        .map(|l| (0..n).map(|j| ratio(l, j) * rows[j][0]).sum::<Complex64>() / n as f64)
        .collect();
    // Σ_l Ξ_l/Ξ_l[0] = Σ_j c_j y_j with c_j = (1/N) Σ_l ratio(l, j)/Ξ_l[0].
    let x_tilde = average_normalised(&firsts, |l, out| {
        for j in 0..n {
            let c = ratio(l, j) / n as f64;
            for (o, y) in out.iter_mut().zip(rows[j].iter()) {
                *o += c * y;
            }
        }
    }, len)?;
    Ok(DfsRecovery {
        x_tilde: x_tilde.0,
        phi_ratios,
        condition_flags: x_tilde.1,
        mode: RatioMode::Xcorr,
    })
}

/// Averages `Ξ_l / Ξ_l[0]` over the rows whose first sample is usable.
/// `accumulate(l, out)` adds `Ξ_l` into `out`.
fn average_normalised(
    firsts: &[Complex64],
    accumulate: impl Fn(usize, &mut [Complex64]),
    len: usize,
) -> Result<(ComplexSequence, Vec<bool>)> {
    let flags: Vec<bool> = firsts.iter().map(|f| f.norm() < DEGENERATE_MAGNITUDE).collect();
    let used = flags.iter().filter(|f| !**f).count();
    if used == 0 {
        return Err(Error::DegenerateRow {
            row: 0,
            magnitude: firsts.iter().map(|f| f.norm()).fold(0.0, f64::max),
        });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let mut row = vec![Complex64::new(0.0, 0.0); len];
    for (l, first) in firsts.iter().enumerate() {
        if flags[l] {
            continue;
        }
        row.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        accumulate(l, &mut row);
        let scale = first.inv() / used as f64;
        for (o, v) in out.iter_mut().zip(&row) {
            *o += v * scale;
        }
    }
    out[0] = Complex64::new(1.0, 0.0);
    Ok((out.into(), flags))
}

/// `(1/N) Σ_i y_i/φ_i` with known gains: the column average whose residual
/// is the averaged receiver noise.
pub fn oracle_column_average(rows: &[ComplexSequence], phi: &[Complex64]) -> Result<ComplexSequence> {
    if rows.is_empty() || rows.len() != phi.len() {
        return Err(invalid!("{} rows but {} gains", rows.len(), phi.len()));
    }
    let len = rows[0].len();
    if rows.iter().any(|r| r.len() != len) {
        return Err(invalid!("rows differ in length"));
    }
    if phi.iter().any(|p| p.norm() < DEGENERATE_MAGNITUDE) {
        return Err(invalid!("zero antenna gain"));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (r, p) in rows.iter().zip(phi) {
        let inv = p.inv() / rows.len() as f64;
        for (o, y) in out.iter_mut().zip(r.iter()) {
            *o += y * inv;
        }
    }
    Ok(out.into())
}

/// Splits `0..n` into `⌈n/group_size⌉` contiguous groups whose sizes differ
/// by at most one, larger groups first.
pub fn partition_groups(n: usize, group_size: usize) -> Result<Vec<Range<usize>>> {
    if group_size < 2 {
        return Err(Error::Config(format!("group_size must be at least 2, got {group_size}")));
    }
    if group_size > n {
        return Err(Error::Config(format!("group_size {group_size} exceeds antenna count {n}")));
    }
    let count = n.div_ceil(group_size);
    let base = n / count;
    let extra = n % count;
    if base < 2 {
        return Err(Error::Config(format!(
            "{n} antennas in groups of {group_size} leaves a single-antenna group"
        )));
    }
    let mut start = 0;
    Ok((0..count)
        .map(|g| {
            let size = base + usize::from(g < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect())
}

/// A trained classifier paired with the feature extractor it expects.
#[derive(Debug, Clone, Copy)]
pub struct Identifier<'a> {
    pub extractor: &'a FeatureExtractor,
    pub model: &'a TrainedModel,
}

impl Identifier<'_> {
    pub fn classify(&self, x: &[Complex64]) -> Result<usize> {
        let f = self.extractor.extract(x)?;
        Ok(predict(self.model, &f.values)?.label)
    }
}

fn pick_model<'a>(models: &[&'a TrainedModel], i: usize, units: usize) -> Result<&'a TrainedModel> {
    match models.len() {
        1 => Ok(models[0]),
        m if m == units => Ok(models[i]),
        m => Err(Error::Config(format!("{m} models for {units} voting units"))),
    }
}

/// Labels from classifying each antenna's raw row with its own model (or
/// one shared model).
pub fn per_antenna_labels(
    capture: &AntennaCapture,
    extractor: &FeatureExtractor,
    models: &[&TrainedModel],
) -> Result<Vec<usize>> {
    let n = capture.n_antennas();
    (0..n)
        .map(|i| {
            Identifier {
                extractor,
                model: pick_model(models, i, n)?,
            }
            .classify(&capture.rows[i])
        })
        .collect()
}

/// Classifies antenna `antenna`'s raw row alone.
pub fn ors_identify(capture: &AntennaCapture, antenna: usize, id: Identifier<'_>) -> Result<VoteOutcome> {
    let row = capture
        .rows
        .get(antenna)
        .ok_or_else(|| invalid!("antenna {antenna} out of range for {} antennas", capture.n_antennas()))?;
    weighted_vote(&[id.classify(row)?], &[1.0])
}

/// Equal-weight vote over per-antenna labels.
pub fn uws_from_labels(labels: &[usize]) -> Result<VoteOutcome> {
    let w = vec![1.0 / labels.len().max(1) as f64; labels.len()];
    weighted_vote(labels, &w)
}

/// Vote over per-antenna labels weighted by `1/ΔI`.
pub fn miws_from_labels(labels: &[usize], variances: &[VarianceEstimate]) -> Result<VoteOutcome> {
    if labels.len() != variances.len() {
        return Err(invalid!("{} labels but {} variance estimates", labels.len(), variances.len()));
    }
    let delta: Vec<f64> = variances.iter().map(|v| v.delta_mi()).collect::<Result<_>>()?;
    weighted_vote(labels, &miws_weights(&delta)?.omega)
}

pub fn uws_identify(
    capture: &AntennaCapture,
    extractor: &FeatureExtractor,
    models: &[&TrainedModel],
) -> Result<VoteOutcome> {
    uws_from_labels(&per_antenna_labels(capture, extractor, models)?)
}

pub fn miws_identify(
    capture: &AntennaCapture,
    extractor: &FeatureExtractor,
    models: &[&TrainedModel],
    variances: &[VarianceEstimate],
) -> Result<VoteOutcome> {
    miws_from_labels(&per_antenna_labels(capture, extractor, models)?, variances)
}

/// Distortion filtering over all antennas followed by one classification.
pub fn dfs_identify(capture: &AntennaCapture, mode: RatioMode, id: Identifier<'_>) -> Result<VoteOutcome> {
    let rec = dfs_recover_auto(capture, mode)?;
    weighted_vote(&[id.classify(&rec.x_tilde)?], &[1.0])
}

/// Group weights: MIWS weights of each group's mean member deficit.
pub fn group_weights(groups: &[Range<usize>], variances: &[VarianceEstimate]) -> Result<MiwsWeights> {
    let delta: Vec<f64> = variances.iter().map(|v| v.delta_mi()).collect::<Result<_>>()?;
    let group_delta: Vec<f64> = groups
        .iter()
        .map(|g| {
            delta
                .get(g.clone())
                .map(|d| d.iter().sum::<f64>() / d.len() as f64)
                .ok_or_else(|| invalid!("group {g:?} outside {} variance estimates", delta.len()))
        })
        .collect::<Result<_>>()?;
    miws_weights(&group_delta)
}

/// DFS inside each contiguous antenna group, then a weighted vote across
/// groups. `models` holds one model per group or a single shared one.
pub fn gdfws_identify(
    capture: &AntennaCapture,
    group_size: usize,
    mode: RatioMode,
    extractor: &FeatureExtractor,
    models: &[&TrainedModel],
    variances: &[VarianceEstimate],
) -> Result<VoteOutcome> {
    let groups = partition_groups(capture.n_antennas(), group_size)?;
    let weights = group_weights(&groups, variances)?;
    let labels = group_recoveries(capture, &groups, mode)?
        .iter()
        .enumerate()
        .map(|(g, rec)| {
            Identifier {
                extractor,
                model: pick_model(models, g, groups.len())?,
            }
            .classify(&rec.x_tilde)
        })
        .collect::<Result<Vec<_>>>()?;
    weighted_vote(&labels, &weights.omega)
}

/// One DFS recovery per group.
pub fn group_recoveries(capture: &AntennaCapture, groups: &[Range<usize>], mode: RatioMode) -> Result<Vec<DfsRecovery>> {
    groups
        .iter()
        .map(|g| {
            let rows = capture
                .rows
                .get(g.clone())
                .ok_or_else(|| invalid!("group {g:?} outside {} antennas", capture.n_antennas()))?;
            match dfs_recover_rows(rows, mode) {
                Err(Error::DegenerateRow { .. }) if mode == RatioMode::Mean => dfs_recover_rows(rows, RatioMode::Xcorr),
                other => other,
            }
        })
        .collect()
}
