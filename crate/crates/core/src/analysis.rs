//! Closed-form antenna-count theory.
//!
//! Averaging `N` antenna rows that each carry independent noise of power
//! `σ_w² = 10^{-SNR/10}` leaves a residual `τ ~ N(0, σ_w²/N)`. The residual
//! stays within `ξ` of zero with probability `α` when
//!
//! ```text
//! ξ² = 2 [erf⁻¹(α)]² σ_w² / N
//! ```
//!
//! and the relative improvement over one antenna is `p = 1 − 1/√N`.

use std::fmt::Write as _;

use crate::error::{invalid, Result};

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Error function.
///
/// Uses the everywhere-positive series
/// `erf(x) = 2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1))`,
/// which has no cancellation; beyond `|x| = 6` the result is ±1 in double
/// precision.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    if a > 6.0 {
        return x.signum();
    }
    let x2 = a * a;
    let mut term = a;
    let mut sum = a;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    (TWO_OVER_SQRT_PI * (-x2).exp() * sum).copysign(x)
}

/// Inverse error function on `(-1, 1)`.
///
/// Giles' single-precision rational approximation ("Approximating the
/// erfinv function", GPU Computing Gems, 2011) followed by two Newton steps
/// on [`erf`].
pub fn erf_inv(y: f64) -> Result<f64> {
    if !(y > -1.0 && y < 1.0) {
        return Err(invalid!("erf_inv is defined on (-1, 1), got {y}"));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let mut w = -((1.0 - y) * (1.0 + y)).ln();
    let p = if w < 5.0 {
        w -= 2.5;
        [
            2.810_226_36e-08,
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            0.000_218_580_87,
            -0.001_253_725_03,
            -0.004_177_681_64,
            0.246_640_727,
            1.501_409_41,
        ]
        .iter()
        .fold(0.0, |acc, c| acc * w + c)
    } else {
        w = w.sqrt() - 3.0;
        [
            -0.000_200_214_257,
            0.000_100_950_558,
            0.001_349_343_22,
            -0.003_673_428_44,
            0.005_739_507_73,
            -0.007_622_461_3,
            0.009_438_870_47,
            1.001_674_06,
            2.832_976_82,
        ]
        .iter()
        .fold(0.0, |acc, c| acc * w + c)
    };
    let mut x = p * y;
    for _ in 0..2 {
        let slope = TWO_OVER_SQRT_PI * (-x * x).exp();
        x -= (erf(x) - y) / slope;
    }
    Ok(x)
}

/// Noise power `10^{-SNR/10}` under unit signal and channel power.
pub fn noise_power(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Absolute accuracy `ξ = √2·erf⁻¹(α)·10^{-SNR/20}/√N`.
pub fn xi(alpha: f64, snr_db: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid!("confidence level must lie in (0, 1), got {alpha}"));
    }
    if n < 1 {
        return Err(invalid!("antenna count must be at least 1"));
    }
    Ok(2f64.sqrt() * erf_inv(alpha)? * 10f64.powf(-snr_db / 20.0) / (n as f64).sqrt())
}

/// Performance gain `p = 1 − 1/√N`.
pub fn gain(n: usize) -> Result<f64> {
    if n < 1 {
        return Err(invalid!("antenna count must be at least 1"));
    }
    Ok(1.0 - (1.0 / n as f64).sqrt())
}

/// Smallest `N` whose gain strictly exceeds `p0`.
pub fn min_antennas(p0: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&p0) {
        return Err(invalid!("target gain must lie in [0, 1), got {p0}"));
    }
    let bound = 1.0 / ((1.0 - p0) * (1.0 - p0));
    let mut n = bound.floor() as usize + 1;
    // guard against rounding in the bound
    while n > 1 && gain(n - 1)? > p0 {
        n -= 1;
    }
    while gain(n)? <= p0 {
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecommendedScheme {
    Miws,
    Dfs,
    Gdfws,
}

impl RecommendedScheme {
    pub fn name(self) -> &'static str {
        match self {
            RecommendedScheme::Miws => "MIWS",
            RecommendedScheme::Dfs => "DFS",
            RecommendedScheme::Gdfws => "GDFWS",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeChoice {
    pub scheme: RecommendedScheme,
    /// Threshold comparisons that led to the choice.
    pub reason: String,
}

/// Scheme recommendation from antenna count and SNR.
pub fn select_scheme(n: usize, snr_db: f64) -> SchemeChoice {
    if n <= 4 {
        return SchemeChoice {
            scheme: RecommendedScheme::Miws,
            reason: format!("N={n} <= 4"),
        };
    }
    if n > 128 && snr_db >= 10.0 {
        return SchemeChoice {
            scheme: RecommendedScheme::Gdfws,
            reason: format!("N={n} > 128 and SNR={snr_db} dB >= 10 dB"),
        };
    }
    let reason = if n > 128 {
        format!("N={n} > 128 but SNR={snr_db} dB < 10 dB")
    } else {
        format!("4 < N={n} <= 128")
    };
    SchemeChoice {
        scheme: RecommendedScheme::Dfs,
        reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiRow {
    pub n: usize,
    pub xi: f64,
    /// `ξ(previous N) − ξ(N)`; absent for the first entry.
    pub delta: Option<f64>,
}

pub fn xi_table(alpha: f64, snr_db: f64, n_list: &[usize]) -> Result<Vec<XiRow>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid!("antenna counts must be strictly ascending"));
    }
    let mut rows: Vec<XiRow> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let value = xi(alpha, snr_db, n)?;
        let delta = rows.last().map(|r| r.xi - value);
        rows.push(XiRow { n, xi: value, delta });
    }
    Ok(rows)
}

/// Renders the table with one column per antenna count and rows `N`, `ξ`,
/// `Δξ` and the recommended scheme.
pub fn render_xi_table(alpha: f64, snr_db: f64, rows: &[XiRow]) -> String {
    let header: Vec<String> = rows.iter().map(|r| r.n.to_string()).collect();
    let xis: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.xi)).collect();
    let deltas: Vec<String> = rows
        .iter()
        .map(|r| r.delta.map_or("-".to_string(), |d| format!("{d:.4}")))
        .collect();
    let schemes: Vec<String> = rows
        .iter()
        .map(|r| select_scheme(r.n, snr_db).scheme.name().to_string())
        .collect();
    let width = header
        .iter()
        .chain(&xis)
        .chain(&deltas)
        .chain(&schemes)
        .map(String::len)
        .max()
        .unwrap_or(1);
    let mut out = String::new();
    let _ = writeln!(out, "alpha = {alpha}, SNR = {snr_db} dB");
    for (label, cells) in [("N", &header), ("xi", &xis), ("d_xi", &deltas), ("Scheme", &schemes)] {
        let _ = write!(out, "{label:<6}");
        for c in cells {
            let _ = write!(out, " | {c:>width$}");
        }
        out.push('\n');
    }
    out
}

/// Standard deviation of the column-average residual, `10^{-SNR/20}/√N`.
pub fn predicted_residual_std(snr_db: f64, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(invalid!("antenna count must be at least 1"));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(10f64.powf(-snr_db / 20.0) / (n as f64).sqrt())
}

/// Gaussian tail check used in tests: `P(|Z| ≤ z)` for `Z ~ N(0, σ²)`.
pub fn gaussian_coverage(z: f64, sigma: f64) -> f64 {
    erf(z / (sigma * 2f64.sqrt()))
}
