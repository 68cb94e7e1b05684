//! Core domain types shared by the channel model, the receiver DSP and the
//! experiment runner.
//!
//! Units follow the fiber-optics convention used throughout the crate:
//! lengths in km, group-velocity dispersion in ps²/km, nonlinear coefficient
//! in 1/(W·km), and `|sample|²` is instantaneous power in W.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts an attenuation in dB/km to the natural-log power coefficient in 1/km.
pub fn db_per_km_to_alpha(alpha_db_per_km: f64) -> f64 {
    alpha_db_per_km * std::f64::consts::LN_10 / 10.0
}

pub fn alpha_to_db_per_km(alpha: f64) -> f64 {
    alpha * 10.0 / std::f64::consts::LN_10
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// A block of dual-polarization complex samples.
///
/// Both polarizations always have the same, non-zero length.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolSignal {
    x: Vec<Complex64>,
    y: Vec<Complex64>,
    sample_rate: f64,
}

impl DualPolSignal {
    pub fn new(x: Vec<Complex64>, y: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(invalid("signal must contain at least one sample"));
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self { x, y, sample_rate })
    }

    /// All-zero signal of the given length.
    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(
            vec![Complex64::new(0.0, 0.0); len],
            vec![Complex64::new(0.0, 0.0); len],
            sample_rate,
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn x(&self) -> &[Complex64] {
        &self.x
    }

    pub fn y(&self) -> &[Complex64] {
        &self.y
    }

    pub fn x_mut(&mut self) -> &mut [Complex64] {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> &mut [Complex64] {
        &mut self.y
    }

    /// Mutable access to both polarizations at once.
    pub fn pols_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        (&mut self.x, &mut self.y)
    }

    pub fn into_parts(self) -> (Vec<Complex64>, Vec<Complex64>, f64) {
        (self.x, self.y, self.sample_rate)
    }

    /// Total (dual-pol) instantaneous power of sample `k`.
    pub fn intensity(&self, k: usize) -> f64 {
        self.x[k].norm_sqr() + self.y[k].norm_sqr()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect()
    }

    /// Multiplies every sample of both polarizations by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for s in self.x.iter_mut().chain(self.y.iter_mut()) {
            *s *= factor;
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale(factor);
        self
    }

    /// Copy of samples `[start, start + len)` with cyclic wraparound.
    pub fn cyclic_window(&self, start: isize, len: usize) -> DualPolSignal {
        let n = self.len() as isize;
        let idx = |i: usize| (start + i as isize).rem_euclid(n) as usize;
        let x = (0..len).map(|i| self.x[idx(i)]).collect();
        let y = (0..len).map(|i| self.y[idx(i)]).collect();
        DualPolSignal {
            x,
            y,
            sample_rate: self.sample_rate,
        }
    }

    /// Contiguous sub-range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<DualPolSignal> {
        if start >= end || end > self.len() {
            return Err(invalid(format!(
                "slice [{start}, {end}) out of range for length {}",
                self.len()
            )));
        }
        Self::new(
            self.x[start..end].to_vec(),
            self.y[start..end].to_vec(),
            self.sample_rate,
        )
    }
}

/// Per-span fiber constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberParams {
    /// Group-velocity dispersion in ps²/km (negative for anomalous SMF).
    pub beta2: f64,
    /// Nonlinear coefficient in 1/(W·km).
    pub gamma: f64,
    /// Power attenuation in 1/km (natural log).
    pub alpha: f64,
    /// Fiber length in km.
    pub length: f64,
}

impl FiberParams {
    pub fn new(beta2: f64, gamma: f64, alpha_db_per_km: f64, length: f64) -> Result<Self> {
        let p = Self {
            beta2,
            gamma,
            alpha: db_per_km_to_alpha(alpha_db_per_km),
            length,
        };
        p.validate()?;
        Ok(p)
    }

    /// Standard single-mode fiber at 1550 nm.
    pub fn standard_smf(length: f64) -> Self {
        Self {
            beta2: -21.0,
            gamma: 1.3,
            alpha: db_per_km_to_alpha(0.2),
            length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length >= 0.0 && self.length.is_finite()) {
            return Err(invalid(format!("fiber length must be >= 0, got {}", self.length)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("attenuation must be >= 0, got {}", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !self.beta2.is_finite() {
            return Err(invalid("beta2 must be finite"));
        }
        Ok(())
    }

    pub fn alpha_db_per_km(&self) -> f64 {
        alpha_to_db_per_km(self.alpha)
    }

    /// Span loss in dB.
    pub fn loss_db(&self) -> f64 {
        self.alpha_db_per_km() * self.length
    }
}

/// Amplifier gain setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmpGain {
    /// Gain equal to the span loss.
    Transparent,
    Db(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub span: FiberParams,
    pub num_spans: usize,
    pub amp_gain: AmpGain,
    /// `None` disables ASE noise.
    pub amp_noise_figure_db: Option<f64>,
    pub pol_rotation: bool,
    /// nm
    pub center_wavelength: f64,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        self.span.validate()?;
        if self.num_spans == 0 {
            return Err(invalid("num_spans must be >= 1"));
        }
        if let AmpGain::Db(g) = self.amp_gain {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(invalid(format!("amplifier gain must be >= 0 dB, got {g}")));
            }
        }
        if !(self.center_wavelength > 0.0 && self.center_wavelength.is_finite()) {
            return Err(invalid("center wavelength must be positive"));
        }
        Ok(())
    }

    pub fn gain_db(&self) -> f64 {
        match self.amp_gain {
            AmpGain::Transparent => self.span.loss_db(),
            AmpGain::Db(g) => g,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.span.length * self.num_spans as f64
    }

    /// Optical carrier frequency in Hz.
    pub fn carrier_frequency(&self) -> f64 {
        SPEED_OF_LIGHT / (self.center_wavelength * 1e-9)
    }

    /// Net power change over one span plus its amplifier (linear).
    pub fn net_span_gain(&self) -> f64 {
        db_to_linear(self.gain_db()) * (-self.span.alpha * self.span.length).exp()
    }
}

impl Default for LinkConfig {
    /// 80 × 40 km of standard SMF with transparent EDFAs (NF 5 dB) and
    /// polarization scrambling after every span.
    fn default() -> Self {
        Self {
            span: FiberParams::standard_smf(40.0),
            num_spans: 80,
            amp_gain: AmpGain::Transparent,
            amp_noise_figure_db: Some(5.0),
            pol_rotation: true,
            center_wavelength: 1550.0,
        }
    }
}

/// Symmetric intensity-filter taps `c_0 … c_Nc` of the enhanced nonlinear step.
#[derive(Debug, Clone, PartialEq)]
pub struct EssfmCoefficients {
    c: Vec<f64>,
}

impl EssfmCoefficients {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(invalid("coefficient vector must have at least one entry"));
        }
        if let Some(bad) = c.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("coefficient c_{bad} is not finite")));
        }
        Ok(Self { c })
    }

    /// `(1, 0, …, 0)` with `nc + 1` entries: the plain SSFM nonlinear step.
    pub fn unit(nc: usize) -> Self {
        let mut c = vec![0.0; nc + 1];
        c[0] = 1.0;
        Self { c }
    }

    /// Filter half-length `N_c`.
    pub fn nc(&self) -> usize {
        self.c.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    /// `c_0 + 2 Σ c_i`: the response to a constant intensity.
    pub fn dc_gain(&self) -> f64 {
        self.c[0] + 2.0 * self.c[1..].iter().sum::<f64>()
    }
}

/// Loss-weighted length `(1 − e^{−α·dz})/α` in km.
pub fn effective_length(alpha: f64, dz: f64) -> Result<f64> {
    if !(dz >= 0.0) || !dz.is_finite() {
        return Err(invalid(format!("step length must be >= 0, got {dz}")));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("attenuation must be >= 0, got {alpha}")));
    }
    let a = alpha * dz;
    if a < 1e-8 {
        Ok(dz * (1.0 - a / 2.0 + a * a / 6.0))
    } else {
        Ok(-(-a).exp_m1() / alpha)
    }
}

/// Mean dual-pol power `⟨|x_k|² + |y_k|²⟩` in W.
pub fn signal_power(sig: &DualPolSignal) -> f64 {
    let total: f64 = sig
        .x
        .iter()
        .zip(&sig.y)
        .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
        .sum();
    total / sig.len() as f64
}

/// Rescales `sig` so that its mean dual-pol power is `target_dbm`.
pub fn scale_to_power(sig: &DualPolSignal, target_dbm: f64) -> Result<DualPolSignal> {
    let p = signal_power(sig);
    if !(p > 0.0) || !p.is_finite() {
        return Err(invalid("cannot scale a zero-power signal"));
    }
    let factor = (dbm_to_watts(target_dbm) / p).sqrt();
    Ok(sig.clone().scaled(factor))
}
