//! Forward propagation through an amplified multi-span link.
//!
//! Each span is integrated with the Manakov split-step Fourier method on a
//! single circular block: dispersion in the frequency domain, then a
//! nonlinear phase proportional to the total dual-pol intensity, then the
//! step's attenuation. Spans are followed by an EDFA with ASE noise and,
//! optionally, a random polarization rotation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::sigkit::{db_to_linear, effective_length, DualPolSignal, FiberParams, LinkConfig, PLANCK};
use crate::spectral::{fft_frequencies, fft_in_place, ifft_in_place};

/// ps² → s²
pub(crate) const PS2: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsfmStepConfig {
    pub steps_per_span: usize,
    pub nonlinear_enabled: bool,
}

impl SsfmStepConfig {
    pub fn new(steps_per_span: usize) -> Result<Self> {
        if steps_per_span == 0 {
            return Err(invalid("steps_per_span must be >= 1"));
        }
        Ok(Self {
            steps_per_span,
            nonlinear_enabled: true,
        })
    }

    pub fn linear_only(mut self) -> Self {
        self.nonlinear_enabled = false;
        self
    }
}

/// Per-bin dispersion factors `e^{−j2π²β₂f²Δz}`.
pub fn dispersion_phasors(beta2: f64, dz: f64, freqs: &[f64]) -> Vec<Complex64> {
    let k = -2.0 * PI * PI * beta2 * PS2 * dz;
    freqs.iter().map(|f| Complex64::cis(k * f * f)).collect()
}

/// Applies the dispersion operator to a frequency-domain dual-pol block.
pub fn linear_substep(spectrum: &mut DualPolSignal, beta2: f64, dz: f64, freqs: &[f64]) -> Result<()> {
    if freqs.len() != spectrum.len() {
        return Err(Error::LengthMismatch {
            expected: spectrum.len(),
            actual: freqs.len(),
        });
    }
    let h = dispersion_phasors(beta2, dz, freqs);
    apply_phasors(spectrum, &h);
    Ok(())
}

pub(crate) fn apply_phasors(spectrum: &mut DualPolSignal, h: &[Complex64]) {
    let (x, y) = spectrum.pols_mut();
    for ((a, b), hk) in x.iter_mut().zip(y.iter_mut()).zip(h) {
        *a *= hk;
        *b *= hk;
    }
}

/// Time-domain filtering with precomputed frequency-domain factors.
pub(crate) fn filter_block(block: &mut DualPolSignal, h: &[Complex64]) {
    let (x, y) = block.pols_mut();
    for pol in [x, y] {
        // Lengths are powers of two by construction.
        fft_in_place(pol).expect("power-of-two block");
        for (v, hk) in pol.iter_mut().zip(h) {
            *v *= hk;
        }
        ifft_in_place(pol).expect("power-of-two block");
    }
}

/// Manakov Kerr step: both polarizations of sample `k` rotate by
/// `−γ·Δz_eff·(|y_kx|² + |y_ky|²)`.
pub fn nonlinear_substep_ssfm(block: &mut DualPolSignal, gamma: f64, dz_eff: f64) {
    let k = -gamma * dz_eff;
    let (x, y) = block.pols_mut();
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let rot = Complex64::cis(k * (a.norm_sqr() + b.norm_sqr()));
        *a *= rot;
        *b *= rot;
    }
}

/// Propagates a circular block through one fiber span with uniform steps.
pub fn propagate_span(
    sig: &DualPolSignal,
    fiber: &FiberParams,
    cfg: &SsfmStepConfig,
) -> Result<DualPolSignal> {
    fiber.validate()?;
    if cfg.steps_per_span == 0 {
        return Err(invalid("steps_per_span must be >= 1"));
    }
    let freqs = fft_frequencies(sig.len(), sig.sample_rate())?;
    let dz = fiber.length / cfg.steps_per_span as f64;
    let dz_eff = effective_length(fiber.alpha, dz)?;
    let h = dispersion_phasors(fiber.beta2, dz, &freqs);
    let loss = (-fiber.alpha * dz / 2.0).exp();

    let mut out = sig.clone();
    for _ in 0..cfg.steps_per_span {
        filter_block(&mut out, &h);
        if cfg.nonlinear_enabled && fiber.gamma != 0.0 {
            nonlinear_substep_ssfm(&mut out, fiber.gamma, dz_eff);
        }
        if loss != 1.0 {
            out.scale(loss);
        }
    }
    Ok(out)
}

/// One-sided ASE power spectral density per polarization, W/Hz.
pub fn ase_psd(gain_db: f64, noise_figure_db: f64, center_wavelength_nm: f64) -> f64 {
    let g = db_to_linear(gain_db);
    let f = db_to_linear(noise_figure_db);
    let nu = crate::sigkit::SPEED_OF_LIGHT / (center_wavelength_nm * 1e-9);
    (g - 1.0) * f * PLANCK * nu / 2.0
}

/// Lumped EDFA: amplitude gain `10^{G_dB/20}` plus white circular Gaussian
/// ASE of variance `S_ASE · sample_rate` on each polarization.
/// `noise_figure_db = None` disables the noise.
pub fn amplify_with_ase(
    sig: &DualPolSignal,
    gain_db: f64,
    noise_figure_db: Option<f64>,
    center_wavelength_nm: f64,
    rng_seed: u64,
) -> Result<DualPolSignal> {
    if !(gain_db >= 0.0) || !gain_db.is_finite() {
        return Err(invalid(format!("amplifier gain must be >= 0 dB, got {gain_db}")));
    }
    let mut out = sig.clone().scaled(10f64.powf(gain_db / 20.0));
    let Some(nf) = noise_figure_db else {
        return Ok(out);
    };
    let variance = ase_psd(gain_db, nf, center_wavelength_nm) * sig.sample_rate();
    if variance <= 0.0 {
        return Ok(out);
    }
    let sigma = (variance / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (x, y) = out.pols_mut();
    for v in x.iter_mut().chain(y.iter_mut()) {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(sigma * re, sigma * im);
    }
    Ok(out)
}

/// 2×2 Jones matrix acting on `(x, y)ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[Complex64; 2]; 2]);

impl JonesMatrix {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self([[one, zero], [zero, one]])
    }

    /// Swaps the two polarizations.
    pub fn swap() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self([[zero, one], [one, zero]])
    }

    /// Real rotation by `theta` radians.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self([
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ])
    }

    /// Haar-distributed element of U(2): a uniform unit quaternion for the
    /// SU(2) part times a uniform global phase.
    pub fn haar_random(rng: &mut impl Rng) -> Self {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [a, b, c, d] = q.map(|v| v / norm);
        let phase = Complex64::cis(rng.random_range(0.0..2.0 * PI));
        Self([
            [Complex64::new(a, b) * phase, Complex64::new(c, d) * phase],
            [Complex64::new(-c, d) * phase, Complex64::new(a, -b) * phase],
        ])
    }

    pub fn apply(&self, sig: &mut DualPolSignal) {
        let m = self.0;
        let (x, y) = sig.pols_mut();
        for (a, b) in x.iter_mut().zip(y.iter_mut()) {
            let (u, v) = (*a, *b);
            *a = m[0][0] * u + m[0][1] * v;
            *b = m[1][0] * u + m[1][1] * v;
        }
    }
}

pub fn random_polarization_rotation(sig: &DualPolSignal, rng_seed: u64) -> DualPolSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = sig.clone();
    JonesMatrix::haar_random(&mut rng).apply(&mut out);
    out
}

/// Common Wiener phase noise on both polarizations with increments of
/// variance `2π·linewidth/sample_rate`.
pub fn apply_laser_phase_noise(sig: &DualPolSignal, linewidth: f64, rng_seed: u64) -> Result<DualPolSignal> {
    if !(linewidth >= 0.0) || !linewidth.is_finite() {
        return Err(invalid(format!("linewidth must be >= 0, got {linewidth}")));
    }
    let mut out = sig.clone();
    if linewidth == 0.0 {
        return Ok(out);
    }
    let sigma = (2.0 * PI * linewidth / sig.sample_rate()).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut phi = 0.0f64;
    let (x, y) = out.pols_mut();
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let rot = Complex64::cis(phi);
        *a *= rot;
        *b *= rot;
        let n: f64 = rng.sample(StandardNormal);
        phi += sigma * n;
    }
    Ok(out)
}

/// Propagates through every span of `link`, each followed by its amplifier
/// and, when enabled, a random polarization rotation.
pub fn propagate_link(
    sig: &DualPolSignal,
    link: &LinkConfig,
    cfg: &SsfmStepConfig,
    rng_seed: u64,
) -> Result<DualPolSignal> {
    link.validate()?;
    let gain_db = link.gain_db();
    let mut seeds = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = sig.clone();
    for _ in 0..link.num_spans {
        let ase_seed = seeds.next_u64();
        let pol_seed = seeds.next_u64();
        out = propagate_span(&out, &link.span, cfg)?;
        out = amplify_with_ase(
            &out,
            gain_db,
            link.amp_noise_figure_db,
            link.center_wavelength,
            ase_seed,
        )?;
        if link.pol_rotation {
            out = random_polarization_rotation(&out, pol_seed);
        }
    }
    Ok(out)
}
