//! Receiver-side compensation: frequency-domain FFE, split-step DBP and
//! enhanced split-step DBP, all running inside the overlap-and-save framer.
//!
//! DBP steps are laid out uniformly over the whole link in forward
//! coordinates and processed from the receiver back to the transmitter.
//! Each reverse step over `[a, b]` undoes dispersion over `b − a`, restores
//! the signal to the forward power level at `a` (gain replaces loss, amplifier
//! gains are divided out), and applies the inverse Kerr phase with an
//! effective length equal to the forward power profile integrated over the
//! segment, normalized to the level at `a`.

use num_complex::Complex64;

use crate::channel::{dispersion_phasors, nonlinear_substep_ssfm, PS2};
use crate::error::{invalid, Result};
use crate::sigkit::{effective_length, DualPolSignal, EssfmCoefficients, LinkConfig};
use crate::spectral::{fft_frequencies, fft_in_place, ifft_in_place, overlap_save_run, OverlapPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ffe,
    Ssfm,
    Essfm,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ffe => "FFE",
            Algorithm::Ssfm => "SSFM",
            Algorithm::Essfm => "ESSFM",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ffe" => Ok(Algorithm::Ffe),
            "ssfm" => Ok(Algorithm::Ssfm),
            "essfm" => Ok(Algorithm::Essfm),
            other => Err(invalid(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Placement of the nonlinear sub-step inside each reverse step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepOrder {
    #[default]
    LinearFirst,
    NonlinearFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbpConfig {
    pub algorithm: Algorithm,
    /// Number of steps over the whole link; ignored by the FFE.
    pub num_steps: usize,
    /// Required for ESSFM.
    pub coeffs: Option<EssfmCoefficients>,
    pub plan: OverlapPlan,
    pub link: LinkConfig,
    pub order: StepOrder,
}

impl DbpConfig {
    pub fn ffe(link: LinkConfig, plan: OverlapPlan) -> Self {
        Self {
            algorithm: Algorithm::Ffe,
            num_steps: 1,
            coeffs: None,
            plan,
            link,
            order: StepOrder::LinearFirst,
        }
    }

    pub fn ssfm(link: LinkConfig, plan: OverlapPlan, num_steps: usize) -> Self {
        Self {
            algorithm: Algorithm::Ssfm,
            num_steps,
            coeffs: None,
            plan,
            link,
            order: StepOrder::LinearFirst,
        }
    }

    pub fn essfm(link: LinkConfig, plan: OverlapPlan, num_steps: usize, coeffs: EssfmCoefficients) -> Self {
        Self {
            algorithm: Algorithm::Essfm,
            num_steps,
            coeffs: Some(coeffs),
            plan,
            link,
            order: StepOrder::LinearFirst,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.algorithm != Algorithm::Ffe && self.num_steps == 0 {
            return Err(invalid("DBP needs at least one step"));
        }
        if self.algorithm == Algorithm::Essfm {
            let c = self
                .coeffs
                .as_ref()
                .ok_or_else(|| invalid("ESSFM requires coefficients"))?;
            if self.plan.block_len() <= 2 * c.nc() {
                return Err(invalid(format!(
                    "block length {} too short for N_c = {}",
                    self.plan.block_len(),
                    c.nc()
                )));
            }
        }
        Ok(())
    }

    /// Steps actually executed (1 for the FFE).
    pub fn effective_steps(&self) -> usize {
        match self.algorithm {
            Algorithm::Ffe => 1,
            _ => self.num_steps,
        }
    }

    pub fn nc(&self) -> usize {
        self.coeffs.as_ref().map_or(0, EssfmCoefficients::nc)
    }
}

/// `2π·|β₂|·L·B²` in samples, before rounding.
pub fn channel_memory_raw(beta2: f64, length_km: f64, bandwidth: f64) -> f64 {
    2.0 * std::f64::consts::PI * beta2.abs() * PS2 * length_km * bandwidth * bandwidth
}

/// Channel memory rounded up to the next power of two (at least 1).
pub fn estimate_channel_memory(beta2: f64, length_km: f64, bandwidth: f64) -> usize {
    let raw = channel_memory_raw(beta2, length_km, bandwidth).ceil();
    if raw <= 1.0 {
        1
    } else {
        (raw as usize).next_power_of_two()
    }
}

/// Enhanced nonlinear step: sample `k` of both polarizations is rotated by
/// `−γ·Δz_eff·(c₀I_k + Σᵢ cᵢ(I_{k−i} + I_{k+i}))`, where `I` is the dual-pol
/// intensity and neighbours wrap cyclically within the block.
pub fn nonlinear_substep_essfm(
    block: &mut DualPolSignal,
    gamma: f64,
    dz_eff: f64,
    coeffs: &EssfmCoefficients,
) -> Result<()> {
    let n = block.len();
    if n <= 2 * coeffs.nc() {
        return Err(invalid(format!(
            "block of {n} samples too short for N_c = {}",
            coeffs.nc()
        )));
    }
    let intensity = block.intensities();
    let filtered = filter_intensity(&intensity, coeffs.as_slice());
    let k = -gamma * dz_eff;
    let (x, y) = block.pols_mut();
    for ((a, b), f) in x.iter_mut().zip(y.iter_mut()).zip(&filtered) {
        let rot = Complex64::cis(k * f);
        *a *= rot;
        *b *= rot;
    }
    Ok(())
}

/// Symmetric cyclic FIR on the intensity sequence.
pub(crate) fn filter_intensity(intensity: &[f64], c: &[f64]) -> Vec<f64> {
    let n = intensity.len();
    (0..n)
        .map(|k| {
            let mut acc = c[0] * intensity[k];
            for (i, ci) in c.iter().enumerate().skip(1) {
                acc += ci * (intensity[(k + n - i) % n] + intensity[(k + i) % n]);
            }
            acc
        })
        .collect()
}

/// One reverse step of a DBP schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbpStep {
    /// Fiber length covered, km.
    pub length: f64,
    /// Amplitude factor that brings the signal to the forward level at the
    /// segment start.
    pub amplitude: f64,
    /// Effective length of the segment relative to that level, km.
    pub nl_weight: f64,
}

/// Forward power of the link at `z` relative to the launch level.
/// Right-continuous at amplifiers.
fn power_level(link: &LinkConfig, z: f64) -> f64 {
    let ls = link.span.length;
    let g = link.net_span_gain();
    if ls == 0.0 {
        return g.powi(link.num_spans as i32);
    }
    let (n, u) = span_position(link, z);
    g.powi(n as i32) * (-link.span.alpha * u).exp()
}

/// Span index and local position of `z`, snapping to span boundaries.
fn span_position(link: &LinkConfig, z: f64) -> (usize, f64) {
    let ls = link.span.length;
    let q = z / ls;
    let r = q.round();
    if (q - r).abs() < 1e-9 {
        return (r as usize, 0.0);
    }
    let n = q.floor();
    (n as usize, z - n * ls)
}

/// `∫_a^b P(z) dz / P(a)` over the forward power profile.
fn segment_weight(link: &LinkConfig, a: f64, b: f64) -> Result<f64> {
    let ls = link.span.length;
    let g = link.net_span_gain();
    let alpha = link.span.alpha;
    let mut acc = 0.0;
    let mut z = a;
    while b - z > 1e-12 * b.max(1.0) {
        let (n, u) = span_position(link, z);
        let piece = (ls - u).min(b - z);
        acc += g.powi(n as i32) * (-alpha * u).exp() * effective_length(alpha, piece)?;
        z += piece;
    }
    Ok(acc / power_level(link, a))
}

/// Reverse-order step schedule for `num_steps` uniform steps over the link.
pub fn step_schedule(link: &LinkConfig, num_steps: usize) -> Result<Vec<DbpStep>> {
    link.validate()?;
    if num_steps == 0 {
        return Err(invalid("DBP needs at least one step"));
    }
    let total = link.total_length();
    let h = total / num_steps as f64;
    (0..num_steps)
        .rev()
        .map(|j| {
            let a = j as f64 * h;
            let b = if j + 1 == num_steps {
                total
            } else {
                (j + 1) as f64 * h
            };
            Ok(DbpStep {
                length: b - a,
                amplitude: (power_level(link, a) / power_level(link, b)).sqrt(),
                nl_weight: segment_weight(link, a, b)?,
            })
        })
        .collect()
}

/// Precomputed block processor for one DBP configuration.
#[derive(Debug, Clone)]
pub struct DbpProcessor {
    pub(crate) algorithm: Algorithm,
    pub(crate) order: StepOrder,
    pub(crate) gamma: f64,
    pub(crate) coeffs: Option<EssfmCoefficients>,
    /// Dispersion phasors of one reverse step (all steps have equal length,
    /// except for the FFE which has a single whole-link step).
    pub(crate) phasors: Vec<Complex64>,
    pub(crate) steps: Vec<DbpStep>,
}

impl DbpProcessor {
    pub fn new(cfg: &DbpConfig, sample_rate: f64) -> Result<Self> {
        cfg.validate()?;
        let freqs = fft_frequencies(cfg.plan.block_len(), sample_rate)?;
        let beta2 = cfg.link.span.beta2;
        let (phasors, steps) = match cfg.algorithm {
            Algorithm::Ffe => {
                let length = cfg.link.total_length();
                let step = DbpStep {
                    length,
                    amplitude: 1.0,
                    nl_weight: 0.0,
                };
                (dispersion_phasors(-beta2, length, &freqs), vec![step])
            }
            _ => {
                let steps = step_schedule(&cfg.link, cfg.num_steps)?;
                (dispersion_phasors(-beta2, steps[0].length, &freqs), steps)
            }
        };
        let coeffs = match cfg.algorithm {
            Algorithm::Essfm => cfg.coeffs.clone(),
            _ => None,
        };
        Ok(Self {
            algorithm: cfg.algorithm,
            order: cfg.order,
            gamma: cfg.link.span.gamma,
            coeffs,
            phasors,
            steps,
        })
    }

    pub(crate) fn linear(block: &mut DualPolSignal, h: &[Complex64]) {
        let (x, y) = block.pols_mut();
        for pol in [x, y] {
            fft_in_place(pol).expect("power-of-two block");
            for (v, hk) in pol.iter_mut().zip(h) {
                *v *= hk;
            }
            ifft_in_place(pol).expect("power-of-two block");
        }
    }

    fn nonlinear(&self, block: &mut DualPolSignal, weight: f64) {
        if self.gamma == 0.0 {
            return;
        }
        match &self.coeffs {
            // DBP inverts the Kerr phase: γ → −γ.
            Some(c) => {
                nonlinear_substep_essfm(block, -self.gamma, weight, c).expect("validated block length")
            }
            None => nonlinear_substep_ssfm(block, -self.gamma, weight),
        }
    }

    pub fn process(&self, block: &mut DualPolSignal) {
        for step in &self.steps {
            if self.algorithm == Algorithm::Ffe {
                Self::linear(block, &self.phasors);
                continue;
            }
            match self.order {
                StepOrder::LinearFirst => {
                    Self::linear(block, &self.phasors);
                    block.scale(step.amplitude);
                    self.nonlinear(block, step.nl_weight);
                }
                StepOrder::NonlinearFirst => {
                    block.scale(step.amplitude);
                    self.nonlinear(block, step.nl_weight);
                    Self::linear(block, &self.phasors);
                }
            }
        }
    }
}

/// Output of [`backpropagate`], with non-fatal configuration warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct DbpOutput {
    pub signal: DualPolSignal,
    pub warnings: Vec<String>,
}

/// Runs the configured compensation over `sig` with overlap-and-save.
pub fn backpropagate(sig: &DualPolSignal, cfg: &DbpConfig) -> Result<DbpOutput> {
    let processor = DbpProcessor::new(cfg, sig.sample_rate())?;
    let mut warnings = Vec::new();
    let memory = channel_memory_raw(cfg.link.span.beta2, cfg.link.total_length(), sig.sample_rate());
    if (cfg.plan.overlap() as f64) < memory {
        warnings.push(format!(
            "overlap M = {} is below the estimated channel memory of {:.0} samples",
            cfg.plan.overlap(),
            memory
        ));
    }
    let signal = overlap_save_run(sig, cfg.plan, |b| processor.process(b))?;
    Ok(DbpOutput { signal, warnings })
}
